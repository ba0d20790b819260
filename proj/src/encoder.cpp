#include "pedintent/encoder.hpp"

#include <cmath>

#include "pedintent/errors.hpp"

namespace pedintent {

void EncoderConfig::validate() const {
  if (n_heads == 0) throw ConfigError("encoder needs at least one head");
  if (d_model == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(n_heads) +
                      " heads");
  }
  if (n_layers > 0 && d_ff == 0) throw ConfigError("d_ff must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
}

Mask causal_mask(std::size_t seq_len) {
  if (seq_len == 0) throw ContractError("causal mask needs at least one position");
  std::vector<std::uint8_t> allowed(seq_len * seq_len, 0);
  for (std::size_t i = 0; i < seq_len; ++i)
    for (std::size_t j = 0; j <= i; ++j) allowed[i * seq_len + j] = 1;
  return Mask({seq_len, seq_len}, std::move(allowed));
}

template <typename T>
MultiHeadAttention<T> MultiHeadAttention<T>::create(std::size_t d_model, std::size_t n_heads, ParamInit& init) {
  MultiHeadAttention mha;
  mha.query = Linear<T>::create(d_model, d_model, init);
  mha.key = Linear<T>::create(d_model, d_model, init);
  mha.value = Linear<T>::create(d_model, d_model, init);
  mha.out = Linear<T>::create(d_model, d_model, init);
  mha.n_heads = n_heads;
  return mha;
}

template <typename T>
typename MultiHeadAttention<T>::Result MultiHeadAttention<T>::operator()(const Tensor<T>& x,
                                                                        const Mask* mask) const {
  if (x.rank() != 3) throw DimensionError("attention expects (B, S, d), got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), s = x.dim(1), d = x.dim(2);
  const std::size_t dh = d / n_heads;
  if (mask && mask->shape != Shape{s, s}) throw DimensionError("attention mask must be S x S");
  auto heads = [&](const Tensor<T>& t) { return permute(reshape(t, {b, s, n_heads, dh}), {0, 2, 1, 3}); };
  auto q = heads(query(x));
  auto k_t = permute(reshape(key(x), {b, s, n_heads, dh}), {0, 2, 3, 1});
  auto v = heads(value(x));
  auto scores = scale(matmul(q, k_t), static_cast<T>(1.0 / std::sqrt(double(dh))));
  auto weights = softmax(scores, -1, mask);
  auto mixed = reshape(permute(matmul(weights, v), {0, 2, 1, 3}), {b, s, d});
  return {out(mixed), weights};
}

template <typename T>
void MultiHeadAttention<T>::collect(const std::string& prefix, ParameterList<T>& out_params) const {
  query.collect(prefix + ".query", out_params);
  key.collect(prefix + ".key", out_params);
  value.collect(prefix + ".value", out_params);
  out.collect(prefix + ".out", out_params);
}

template <typename T>
EncoderLayer<T> EncoderLayer<T>::create(const EncoderConfig& cfg, ParamInit& init) {
  EncoderLayer layer;
  layer.norm1 = LayerNorm<T>::create(cfg.d_model);
  layer.attention = MultiHeadAttention<T>::create(cfg.d_model, cfg.n_heads, init);
  layer.norm2 = LayerNorm<T>::create(cfg.d_model);
  layer.ff1 = Linear<T>::create(cfg.d_model, cfg.d_ff, init);
  layer.ff2 = Linear<T>::create(cfg.d_ff, cfg.d_model, init);
  layer.dropout_rate = cfg.dropout_rate;
  layer.activation = cfg.activation;
  return layer;
}

template <typename T>
Tensor<T> EncoderLayer<T>::operator()(const Tensor<T>& x, const Mask* mask, ForwardContext& ctx,
                                      Tensor<T>* attention_weights) const {
  auto attn = attention(norm1(x), mask);
  if (attention_weights) *attention_weights = attn.weights;
  auto h = add(x, dropout(attn.output, dropout_rate, ctx));
  auto ff = ff2(activate(ff1(norm2(h)), activation));
  return add(h, dropout(ff, dropout_rate, ctx));
}

template <typename T>
void EncoderLayer<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  norm1.collect(prefix + ".norm1", out);
  attention.collect(prefix + ".attention", out);
  norm2.collect(prefix + ".norm2", out);
  ff1.collect(prefix + ".ff1", out);
  ff2.collect(prefix + ".ff2", out);
}

template <typename T>
Encoder<T> Encoder<T>::create(const EncoderConfig& cfg, ParamInit& init) {
  cfg.validate();
  Encoder enc;
  enc.cfg = cfg;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) enc.layers.push_back(EncoderLayer<T>::create(cfg, init));
  return enc;
}

template <typename T>
typename Encoder<T>::Result Encoder<T>::operator()(const Tensor<T>& x, ForwardContext& ctx) const {
  Result r{x, {}};
  if (layers.empty()) return r;
  Mask mask;
  if (cfg.causal) mask = causal_mask(x.dim(1));
  for (const auto& layer : layers) {
    Tensor<T> weights;
    r.output = layer(r.output, cfg.causal ? &mask : nullptr, ctx, &weights);
    r.attention.push_back(weights);
  }
  return r;
}

template <typename T>
void Encoder<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(prefix + ".layer" + std::to_string(i), out);
}

template struct MultiHeadAttention<float>;
template struct MultiHeadAttention<double>;
template struct EncoderLayer<float>;
template struct EncoderLayer<double>;
template struct Encoder<float>;
template struct Encoder<double>;

}  // namespace pedintent
