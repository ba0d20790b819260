#include "pedintent/fusion.hpp"

#include <cmath>

#include "pedintent/errors.hpp"

namespace pedintent {

FusionKind parse_fusion_kind(std::string_view name) {
  if (name == "concat_ffn") return FusionKind::kConcatFfn;
  if (name == "gap") return FusionKind::kGap;
  if (name == "transformer") return FusionKind::kTransformer;
  if (name == "recurrent") return FusionKind::kRecurrent;
  throw ConfigError("unknown fusion strategy '" + std::string(name) + "'");
}

std::string_view to_string(FusionKind kind) {
  switch (kind) {
    case FusionKind::kConcatFfn: return "concat_ffn";
    case FusionKind::kGap: return "gap";
    case FusionKind::kTransformer: return "transformer";
    case FusionKind::kRecurrent: return "recurrent";
  }
  return "";
}

template <typename T>
LstmCell<T> LstmCell<T>::create(std::size_t input, std::size_t hidden, ParamInit& init) {
  return {init.glorot<T>(input, 4 * hidden), init.glorot<T>(hidden, 4 * hidden), Tensor<T>::zeros({4 * hidden}, true)};
}

template <typename T>
Tensor<T> LstmCell<T>::scan(const Tensor<T>& seq) const {
  if (seq.rank() != 3 || seq.dim(2) != w_input.dim(0)) {
    throw DimensionError("lstm expects (B, S, " + std::to_string(w_input.dim(0)) + "), got " + shape_str(seq.shape()));
  }
  const std::size_t b = seq.dim(0), s = seq.dim(1), h = hidden_size();
  if (s == 0) throw ContractError("lstm needs at least one step");
  auto projected = add(matmul(seq, w_input), bias);  // B x S x 4h
  Tensor<T> hidden, cell;
  for (std::size_t t = 0; t < s; ++t) {
    auto gates = reshape(slice(projected, 1, t, t + 1), {b, 4 * h});
    if (hidden.defined()) gates = add(gates, matmul(hidden, w_hidden));
    auto i = sigmoid(slice(gates, 1, 0, h));
    auto f = sigmoid(slice(gates, 1, h, 2 * h));
    auto g = tanh(slice(gates, 1, 2 * h, 3 * h));
    auto o = sigmoid(slice(gates, 1, 3 * h, 4 * h));
    cell = cell.defined() ? add(mul(f, cell), mul(i, g)) : mul(i, g);
    hidden = mul(o, tanh(cell));
  }
  return hidden;
}

template <typename T>
void LstmCell<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  out.push_back({prefix + ".w_input", w_input});
  out.push_back({prefix + ".w_hidden", w_hidden});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
Fusion<T> Fusion<T>::create(const FusionStrategy& s, std::size_t d_model, std::size_t n_branches, ParamInit& init) {
  if (n_branches == 0) throw ContractError("fusion needs at least one branch");
  Fusion f;
  f.strategy = s;
  f.d_model = d_model;
  f.n_branches = n_branches;
  switch (s.kind) {
    case FusionKind::kConcatFfn:
      if (s.ffn_hidden == 0 || s.ffn_out == 0) throw ConfigError("fusion FFN widths must be positive");
      f.ffn1 = Linear<T>::create(n_branches * d_model, s.ffn_hidden, init);
      f.ffn2 = Linear<T>::create(s.ffn_hidden, s.ffn_out, init);
      break;
    case FusionKind::kGap:
      break;
    case FusionKind::kTransformer: {
      EncoderConfig ec = s.encoder;
      if (ec.d_model != d_model) throw ConfigError("fusion encoder d_model differs from branch d_model");
      f.encoder = Encoder<T>::create(ec, init);
      break;
    }
    case FusionKind::kRecurrent:
      f.lstm = LstmCell<T>::create(d_model, s.recurrent_hidden ? s.recurrent_hidden : d_model, init);
      break;
  }
  return f;
}

template <typename T>
std::size_t Fusion<T>::out_features() const {
  switch (strategy.kind) {
    case FusionKind::kConcatFfn: return strategy.ffn_out;
    case FusionKind::kRecurrent: return lstm.hidden_size();
    default: return d_model;
  }
}

template <typename T>
Tensor<T> Fusion<T>::operator()(const std::vector<BranchOutput<T>>& branches, ForwardContext& ctx) const {
  if (branches.empty()) throw ContractError("fusion needs at least one branch");
  if (branches.size() != n_branches) {
    throw ContractError("fusion built for " + std::to_string(n_branches) + " branches, got " +
                        std::to_string(branches.size()));
  }
  for (const auto& br : branches) {
    if (br.tokens.rank() != 3 || br.tokens.dim(2) != d_model) {
      throw DimensionError("branch tokens must be (B, S, " + std::to_string(d_model) + "), got " +
                           shape_str(br.tokens.shape()));
    }
  }
  if (strategy.kind == FusionKind::kConcatFfn) {
    std::vector<Tensor<T>> pooled;
    for (const auto& br : branches) pooled.push_back(pool_tokens(br.tokens, br.pool));
    auto joined = pooled.size() == 1 ? pooled[0] : concat(pooled, 1);
    return ffn2(activate(ffn1(joined), strategy.ffn_activation));
  }
  std::vector<Tensor<T>> seqs;
  for (const auto& br : branches) seqs.push_back(br.tokens);
  auto tokens = seqs.size() == 1 ? seqs[0] : concat(seqs, 1);
  switch (strategy.kind) {
    case FusionKind::kGap: return mean_over_axis(tokens, 1);
    case FusionKind::kTransformer: return mean_over_axis(encoder(tokens, ctx).output, 1);
    case FusionKind::kRecurrent: return lstm.scan(tokens);
    default: break;
  }
  throw ContractError("unhandled fusion strategy");
}

template <typename T>
void Fusion<T>::collect(const std::string& prefix, ParameterList<T>& out) const {
  switch (strategy.kind) {
    case FusionKind::kConcatFfn:
      ffn1.collect(prefix + ".ffn1", out);
      ffn2.collect(prefix + ".ffn2", out);
      break;
    case FusionKind::kTransformer: encoder.collect(prefix + ".encoder", out); break;
    case FusionKind::kRecurrent: lstm.collect(prefix + ".lstm", out); break;
    case FusionKind::kGap: break;
  }
}

double ensemble_predict(const std::vector<double>& member_probs, const std::vector<double>& w, double b) {
  if (member_probs.size() != kEnsembleMembers || w.size() != kEnsembleMembers) {
    throw ConfigError("ensemble needs exactly 3 members, got " + std::to_string(member_probs.size()));
  }
  double z = b;
  for (std::size_t i = 0; i < kEnsembleMembers; ++i) z += w[i] * member_probs[i];
  return 1.0 / (1.0 + std::exp(-z));
}

template struct LstmCell<float>;
template struct LstmCell<double>;
template struct Fusion<float>;
template struct Fusion<double>;

}  // namespace pedintent
