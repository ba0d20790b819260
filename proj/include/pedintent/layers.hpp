#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "pedintent/tensor.hpp"

namespace pedintent {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;  // shares storage with the owning layer
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

// Seeded parameter initializer. Values are drawn in double and rounded once
// to T.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  // Glorot-uniform (fan_in x fan_out) matrix.
  template <typename T>
  Tensor<T> glorot(std::size_t fan_in, std::size_t fan_out);
  template <typename T>
  Tensor<T> uniform(Shape shape, double bound);

 private:
  std::mt19937_64 rng_;
};

struct ForwardContext {
  bool training = false;
  // Source of dropout masks; required when training with a nonzero rate.
  std::mt19937_64* rng = nullptr;
};

enum class Activation { kGelu, kRelu, kIdentity };
Activation parse_activation(std::string_view name);  // throws ConfigError
std::string_view to_string(Activation a);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a);

// Inverted dropout; identity outside training or at rate 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, ForwardContext& ctx);

template <typename T>
struct Linear {
  Tensor<T> weight;  // in x out
  Tensor<T> bias;    // out

  static Linear create(std::size_t in, std::size_t out, ParamInit& init);
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
  Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma;
  Tensor<T> beta;
  T eps = T(1e-5);

  static LayerNorm create(std::size_t dim);
  Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

}  // namespace pedintent
