#pragma once

#include <cstddef>

#include "pedintent/layers.hpp"
#include "pedintent/tensor.hpp"

namespace pedintent {

// Sinusoidal encoding, (seq_len x d_model):
//   P[pos, 2k] = sin(pos / 10000^(2k/d)),  P[pos, 2k+1] = cos(pos / 10000^(2k/d)).
// d_model must be even.
template <typename T>
Tensor<T> positional_encoding(std::size_t seq_len, std::size_t d_model);

struct TubeletConfig {
  std::size_t t_patch = 2;
  std::size_t h_patch = 16;
  std::size_t w_patch = 16;
  std::size_t d_model = 64;

  std::size_t patch_values() const { return t_patch * h_patch * w_patch * 3; }
  // Throws DimensionError unless every clip dim is divisible by its patch dim.
  std::size_t token_count(std::size_t frames, std::size_t height, std::size_t width) const;
  bool operator==(const TubeletConfig&) const = default;
};

// Non-overlapping space-time patches, each flattened in (t, h, w, channel)
// order and projected affinely. Tokens are ordered time-major, then row, then
// column.
template <typename T>
struct TubeletEmbedding {
  TubeletConfig cfg;
  Linear<T> proj;  // patch_values x d_model

  static TubeletEmbedding create(const TubeletConfig& cfg, ParamInit& init);
  // (B x T x H x W x 3) -> (B x N x d_model)
  Tensor<T> operator()(const Tensor<T>& clips) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const { proj.collect(prefix + ".proj", out); }
};

// One learned (weight, bias) row of width d_model per scalar feature column,
// plus a learned cls token placed at position 0.
template <typename T>
struct FeatureTokenizer {
  Tensor<T> weight;  // F x d
  Tensor<T> bias;    // F x d
  Tensor<T> cls;     // 1 x d

  static FeatureTokenizer create(std::size_t features, std::size_t d_model, ParamInit& init);
  std::size_t features() const { return weight.dim(0); }
  // (B x T x F) -> (B x (T*F + 1) x d), token 1 + t*F + j encodes features[t, j].
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

}  // namespace pedintent
