#pragma once

#include <string_view>
#include <vector>

#include "pedintent/encoder.hpp"
#include "pedintent/layers.hpp"
#include "pedintent/vivit.hpp"

namespace pedintent {

enum class FusionKind { kConcatFfn, kGap, kTransformer, kRecurrent };
FusionKind parse_fusion_kind(std::string_view name);  // throws ConfigError
std::string_view to_string(FusionKind kind);

struct FusionStrategy {
  FusionKind kind = FusionKind::kConcatFfn;
  // concat_ffn: affine(hidden) -> activation -> affine(out)
  std::size_t ffn_hidden = 64;
  std::size_t ffn_out = 64;
  Activation ffn_activation = Activation::kGelu;
  // transformer
  EncoderConfig encoder{1, 4, 64, 256, 0.1, false, Activation::kGelu};
  // recurrent; 0 means d_model
  std::size_t recurrent_hidden = 0;

  bool operator==(const FusionStrategy&) const = default;
};

// One branch's encoded tokens and how to reduce them to a vector.
template <typename T>
struct BranchOutput {
  Tensor<T> tokens;  // B x S x d
  PoolMode pool = PoolMode::kMean;
};

// Single-layer LSTM, gates ordered input, forget, candidate, output.
template <typename T>
struct LstmCell {
  Tensor<T> w_input;   // d x 4h
  Tensor<T> w_hidden;  // h x 4h
  Tensor<T> bias;      // 4h

  static LstmCell create(std::size_t input, std::size_t hidden, ParamInit& init);
  std::size_t hidden_size() const { return w_hidden.dim(0); }
  // Scans (B x S x d), returns the final hidden state (B x h). Zero initial state.
  Tensor<T> scan(const Tensor<T>& seq) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct Fusion {
  FusionStrategy strategy;
  std::size_t d_model = 0;
  std::size_t n_branches = 0;
  Linear<T> ffn1, ffn2;
  Encoder<T> encoder;
  LstmCell<T> lstm;

  static Fusion create(const FusionStrategy& s, std::size_t d_model, std::size_t n_branches, ParamInit& init);
  std::size_t out_features() const;
  // -> (B x out_features)
  Tensor<T> operator()(const std::vector<BranchOutput<T>>& branches, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

// sigma(features . w + b)
template <typename T>
struct Head {
  Linear<T> proj;  // D x 1

  static Head create(std::size_t features, ParamInit& init) { return {Linear<T>::create(features, 1, init)}; }
  // (B x D) -> (B)
  Tensor<T> operator()(const Tensor<T>& features) const {
    return reshape(sigmoid(proj(features)), {features.dim(0)});
  }
  void collect(const std::string& prefix, ParameterList<T>& out) const { proj.collect(prefix, out); }
};

inline constexpr std::size_t kEnsembleMembers = 3;

// sigma(w . p + b) over raw member probabilities. Throws ConfigError unless
// exactly three members are given.
double ensemble_predict(const std::vector<double>& member_probs, const std::vector<double>& w, double b);

}  // namespace pedintent
