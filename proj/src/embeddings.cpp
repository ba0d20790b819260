#include "pedintent/embeddings.hpp"

#include <cmath>

#include "pedintent/errors.hpp"

namespace pedintent {

template <typename T>
Tensor<T> positional_encoding(std::size_t seq_len, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0) {
    throw ConfigError("positional encoding needs an even d_model, got " + std::to_string(d_model));
  }
  std::vector<T> p(seq_len * d_model);
  for (std::size_t pos = 0; pos < seq_len; ++pos)
    for (std::size_t k = 0; k < d_model / 2; ++k) {
      const double angle = double(pos) / std::pow(10000.0, double(2 * k) / double(d_model));
      p[pos * d_model + 2 * k] = static_cast<T>(std::sin(angle));
      p[pos * d_model + 2 * k + 1] = static_cast<T>(std::cos(angle));
    }
  return Tensor<T>({seq_len, d_model}, std::move(p));
}

std::size_t TubeletConfig::token_count(std::size_t frames, std::size_t height, std::size_t width) const {
  if (t_patch == 0 || h_patch == 0 || w_patch == 0) throw ConfigError("tubelet dims must be positive");
  if (frames % t_patch || height % h_patch || width % w_patch || frames == 0 || height == 0 || width == 0) {
    throw DimensionError("clip " + shape_str({frames, height, width}) + " is not divisible into tubelets " +
                         shape_str({t_patch, h_patch, w_patch}));
  }
  return (frames / t_patch) * (height / h_patch) * (width / w_patch);
}

template <typename T>
TubeletEmbedding<T> TubeletEmbedding<T>::create(const TubeletConfig& cfg, ParamInit& init) {
  return {cfg, Linear<T>::create(cfg.patch_values(), cfg.d_model, init)};
}

template <typename T>
Tensor<T> TubeletEmbedding<T>::operator()(const Tensor<T>& clips) const {
  if (clips.rank() != 5 || clips.dim(4) != 3) {
    throw DimensionError("tubelet embedding expects (B, T, H, W, 3), got " + shape_str(clips.shape()));
  }
  const std::size_t b = clips.dim(0), t = clips.dim(1), h = clips.dim(2), w = clips.dim(3);
  const std::size_t n = cfg.token_count(t, h, w);
  const std::size_t nt = t / cfg.t_patch, nh = h / cfg.h_patch, nw = w / cfg.w_patch;
  auto grid = reshape(clips, {b, nt, cfg.t_patch, nh, cfg.h_patch, nw, cfg.w_patch, 3});
  auto patches = reshape(permute(grid, {0, 1, 3, 5, 2, 4, 6, 7}), {b, n, cfg.patch_values()});
  return proj(patches);
}

template <typename T>
FeatureTokenizer<T> FeatureTokenizer<T>::create(std::size_t features, std::size_t d_model, ParamInit& init) {
  if (features == 0) throw ConfigError("feature tokenizer needs at least one feature");
  const double bound = 1.0 / std::sqrt(double(d_model));
  FeatureTokenizer tok;
  tok.weight = init.uniform<T>({features, d_model}, bound);
  tok.bias = init.uniform<T>({features, d_model}, bound);
  tok.cls = init.uniform<T>({1, d_model}, bound);
  return tok;
}

template <typename T>
Tensor<T> FeatureTokenizer<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(2) != features()) {
    throw ConfigError("feature tokenizer built for " + std::to_string(features()) + " features, input is " +
                      shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), t = x.dim(1), f = x.dim(2), d = weight.dim(1);
  // Outer product with a ones row repeats each scalar across the embedding width.
  auto spread = matmul(reshape(x, {b, t, f, 1}), Tensor<T>::full({1, d}, T(1)));
  auto tokens = reshape(add(mul(spread, weight), bias), {b, t * f, d});
  auto cls_rows = matmul(Tensor<T>::full({b, 1, 1}, T(1)), cls);
  return concat<T>({cls_rows, tokens}, 1);
}

template <typename T>
void FeatureTokenizer<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
  out.push_back({prefix + ".cls", cls});
}

template Tensor<float> positional_encoding<float>(std::size_t, std::size_t);
template Tensor<double> positional_encoding<double>(std::size_t, std::size_t);
template struct TubeletEmbedding<float>;
template struct TubeletEmbedding<double>;
template struct FeatureTokenizer<float>;
template struct FeatureTokenizer<double>;

}  // namespace pedintent
