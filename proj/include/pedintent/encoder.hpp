#pragma once

#include <vector>

#include "pedintent/layers.hpp"
#include "pedintent/tensor.hpp"

namespace pedintent {

struct EncoderConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_model = 64;
  std::size_t d_ff = 256;
  double dropout_rate = 0.1;
  bool causal = false;
  Activation activation = Activation::kGelu;

  void validate() const;  // throws ConfigError
  bool operator==(const EncoderConfig&) const = default;
};

// mask[i, j] = (j <= i)
Mask causal_mask(std::size_t seq_len);

template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, out;
  std::size_t n_heads = 1;

  struct Result {
    Tensor<T> output;   // B x S x d
    Tensor<T> weights;  // B x heads x S x S
  };

  static MultiHeadAttention create(std::size_t d_model, std::size_t n_heads, ParamInit& init);
  Result operator()(const Tensor<T>& x, const Mask* mask) const;
  void collect(const std::string& prefix, ParameterList<T>& out_params) const;
};

// Pre-norm layer: h = x + MHA(LN(x)); y = h + FFN(LN(h)).
template <typename T>
struct EncoderLayer {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attention;
  Linear<T> ff1, ff2;
  double dropout_rate = 0.0;
  Activation activation = Activation::kGelu;

  static EncoderLayer create(const EncoderConfig& cfg, ParamInit& init);
  Tensor<T> operator()(const Tensor<T>& x, const Mask* mask, ForwardContext& ctx,
                       Tensor<T>* attention_weights = nullptr) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

template <typename T>
struct Encoder {
  EncoderConfig cfg;
  std::vector<EncoderLayer<T>> layers;

  struct Result {
    Tensor<T> output;
    std::vector<Tensor<T>> attention;  // one B x heads x S x S tensor per layer
  };

  static Encoder create(const EncoderConfig& cfg, ParamInit& init);
  // Positional encoding is the caller's job. A causal config masks with
  // causal_mask(S).
  Result operator()(const Tensor<T>& x, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

}  // namespace pedintent
