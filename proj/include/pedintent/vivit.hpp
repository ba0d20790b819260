#pragma once

#include <string_view>
#include <vector>

#include "pedintent/embeddings.hpp"
#include "pedintent/encoder.hpp"

namespace pedintent {

enum class ViViTVariant { kSpatiotemporal, kFactorised };
ViViTVariant parse_vivit_variant(std::string_view name);  // throws ConfigError
std::string_view to_string(ViViTVariant v);

struct ViViTConfig {
  ViViTVariant variant = ViViTVariant::kSpatiotemporal;
  TubeletConfig tubelet;
  EncoderConfig spatial_encoder;
  EncoderConfig temporal_encoder;  // factorised only

  void validate() const;  // throws ConfigError
  bool operator==(const ViViTConfig&) const = default;
};

enum class PoolMode { kMean, kCls };

// (B x S x d) -> (B x d). kCls returns token 0.
template <typename T>
Tensor<T> pool_tokens(const Tensor<T>& tokens, PoolMode mode);

template <typename T>
struct ViViT {
  ViViTConfig cfg;
  TubeletEmbedding<T> embed;
  Encoder<T> spatial;
  Encoder<T> temporal;

  struct Result {
    // spatiotemporal: (B x N_tokens x d); factorised: (B x T/t_patch x d)
    Tensor<T> tokens;
    std::vector<Tensor<T>> spatial_attention;
    std::vector<Tensor<T>> temporal_attention;
  };

  static ViViT create(const ViViTConfig& cfg, ParamInit& init);
  // clips: (B x T x H x W x 3)
  Result operator()(const Tensor<T>& clips, ForwardContext& ctx) const;
  void collect(const std::string& prefix, ParameterList<T>& out) const;
};

}  // namespace pedintent
