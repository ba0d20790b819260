#include "pedintent/vivit.hpp"

#include "pedintent/errors.hpp"

namespace pedintent {

ViViTVariant parse_vivit_variant(std::string_view name) {
  if (name == "spatiotemporal") return ViViTVariant::kSpatiotemporal;
  if (name == "factorised") return ViViTVariant::kFactorised;
  throw ConfigError("unknown ViViT variant '" + std::string(name) + "'");
}

std::string_view to_string(ViViTVariant v) {
  return v == ViViTVariant::kFactorised ? "factorised" : "spatiotemporal";
}

void ViViTConfig::validate() const {
  spatial_encoder.validate();
  if (tubelet.t_patch == 0 || tubelet.h_patch == 0 || tubelet.w_patch == 0) {
    throw ConfigError("tubelet dims must be positive");
  }
  if (tubelet.d_model != spatial_encoder.d_model) {
    throw ConfigError("tubelet d_model " + std::to_string(tubelet.d_model) + " differs from encoder d_model " +
                      std::to_string(spatial_encoder.d_model));
  }
  if (variant == ViViTVariant::kFactorised) {
    temporal_encoder.validate();
    if (temporal_encoder.d_model != tubelet.d_model) {
      throw ConfigError("temporal encoder d_model differs from tubelet d_model");
    }
  }
}

template <typename T>
Tensor<T> pool_tokens(const Tensor<T>& tokens, PoolMode mode) {
  if (tokens.rank() != 3) throw DimensionError("pooling expects (B, S, d), got " + shape_str(tokens.shape()));
  if (tokens.dim(1) == 0) throw ContractError("cannot pool an empty token sequence");
  if (mode == PoolMode::kMean) return mean_over_axis(tokens, 1);
  return reshape(slice(tokens, 1, 0, 1), {tokens.dim(0), tokens.dim(2)});
}

template <typename T>
ViViT<T> ViViT<T>::create(const ViViTConfig& cfg, ParamInit& init) {
  cfg.validate();
  ViViT v;
  v.cfg = cfg;
  v.embed = TubeletEmbedding<T>::create(cfg.tubelet, init);
  v.spatial = Encoder<T>::create(cfg.spatial_encoder, init);
  if (cfg.variant == ViViTVariant::kFactorised) v.temporal = Encoder<T>::create(cfg.temporal_encoder, init);
  return v;
}

template <typename T>
typename ViViT<T>::Result ViViT<T>::operator()(const Tensor<T>& clips, ForwardContext& ctx) const {
  auto tokens = embed(clips);  // B x N x d
  const std::size_t b = tokens.dim(0), n = tokens.dim(1), d = tokens.dim(2);
  Result r;
  if (cfg.variant == ViViTVariant::kSpatiotemporal) {
    auto enc = spatial(add(tokens, positional_encoding<T>(n, d)), ctx);
    r.tokens = enc.output;
    r.spatial_attention = std::move(enc.attention);
    return r;
  }
  const std::size_t nt = clips.dim(1) / cfg.tubelet.t_patch;
  const std::size_t ns = n / nt;
  // each temporal slice is encoded on its own
  auto slices = reshape(tokens, {b * nt, ns, d});
  auto enc = spatial(slices, ctx);
  auto pooled = reshape(mean_over_axis(enc.output, 1), {b, nt, d});
  auto out = temporal(add(pooled, positional_encoding<T>(nt, d)), ctx);
  r.tokens = out.output;
  r.spatial_attention = std::move(enc.attention);
  r.temporal_attention = std::move(out.attention);
  return r;
}

template <typename T>
void ViViT<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  embed.collect(prefix + ".embed", out);
  spatial.collect(prefix + ".spatial", out);
  if (cfg.variant == ViViTVariant::kFactorised) temporal.collect(prefix + ".temporal", out);
}

template Tensor<float> pool_tokens<float>(const Tensor<float>&, PoolMode);
template Tensor<double> pool_tokens<double>(const Tensor<double>&, PoolMode);
template struct ViViT<float>;
template struct ViViT<double>;

}  // namespace pedintent
