#include "pedintent/model.hpp"

#include <algorithm>
#include <set>

#include "pedintent/errors.hpp"
#include "pedintent/preprocess.hpp"

namespace pedintent {

using nlohmann::json;

std::size_t ModelSpec::feature_width() const {
  std::size_t f = 0;
  for (auto c : channels) f += channel_width(c);
  return f;
}

std::size_t ModelSpec::branch_count() const {
  std::size_t n = has_nonvisual() ? 1 : 0;
  for (const auto& v : vivit) n += v.has_value();
  return n;
}

std::size_t ModelSpec::d_model() const {
  if (has_nonvisual()) return encoder.d_model;
  for (const auto& v : vivit)
    if (v) return v->tubelet.d_model;
  return encoder.d_model;
}

namespace {

void collect_violation(std::vector<std::string>& out, const std::string& where, auto&& check) {
  try {
    check();
  } catch (const ConfigError& e) {
    out.push_back(where + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> ModelSpec::violations() const {
  std::vector<std::string> v;
  if (branch_count() == 0) v.push_back("no branch enabled (need a non-visual channel or a visual input)");
  std::set<NonVisualChannel> seen;
  for (auto c : channels)
    if (!seen.insert(c).second) v.push_back("channel '" + std::string(to_string(c)) + "' listed twice");
  const std::size_t d = d_model();
  if (has_nonvisual()) {
    EncoderConfig e = encoder;
    e.causal = causal;
    collect_violation(v, "encoder", [&] { e.validate(); });
    if (d % 2 != 0) v.push_back("encoder: d_model must be even for positional encoding");
  } else if (use_feature_tokenizer) {
    v.push_back("use_feature_tokenizer needs at least one non-visual channel");
  }
  for (auto input : kAllVisualInputs) {
    const auto& cfg = visual(input);
    if (!cfg) continue;
    const std::string where = "vivit." + std::string(to_string(input));
    collect_violation(v, where, [&] { cfg->validate(); });
    if (cfg->tubelet.d_model != d) {
      v.push_back(where + ": d_model " + std::to_string(cfg->tubelet.d_model) + " differs from " + std::to_string(d));
    }
  }
  if (fusion.kind == FusionKind::kConcatFfn && (fusion.ffn_hidden == 0 || fusion.ffn_out == 0)) {
    v.push_back("fusion: FFN widths must be positive");
  }
  if (fusion.kind == FusionKind::kTransformer) {
    collect_violation(v, "fusion.encoder", [&] { fusion.encoder.validate(); });
    if (fusion.encoder.d_model != d) v.push_back("fusion.encoder: d_model differs from branch d_model");
  }
  return v;
}

void ModelSpec::validate() const {
  auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid model spec:";
  for (const auto& s : v) msg += "\n  - " + s;
  throw ConfigError(msg);
}

// ---- JSON -------------------------------------------------------------------

namespace {

template <typename V>
V get_or(const json& j, const char* key, V fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* n) { return k == n; })) {
      throw ConfigError(where + ": unknown field '" + k + "'");
    }
  }
}

json tubelet_json(const TubeletConfig& t) {
  return {{"t_patch", t.t_patch}, {"h_patch", t.h_patch}, {"w_patch", t.w_patch}, {"d_model", t.d_model}};
}

TubeletConfig tubelet_from(const json& j) {
  reject_unknown(j, {"t_patch", "h_patch", "w_patch", "d_model"}, "tubelet");
  TubeletConfig t;
  t.t_patch = get_or(j, "t_patch", t.t_patch);
  t.h_patch = get_or(j, "h_patch", t.h_patch);
  t.w_patch = get_or(j, "w_patch", t.w_patch);
  t.d_model = get_or(j, "d_model", t.d_model);
  return t;
}

json vivit_json(const ViViTConfig& v) {
  json j = {{"variant", std::string(to_string(v.variant))},
            {"tubelet", tubelet_json(v.tubelet)},
            {"spatial_encoder", to_json(v.spatial_encoder)}};
  if (v.variant == ViViTVariant::kFactorised) j["temporal_encoder"] = to_json(v.temporal_encoder);
  return j;
}

ViViTConfig default_vivit(ViViTVariant variant) {
  ViViTConfig v;
  v.variant = variant;
  v.spatial_encoder = EncoderConfig{2, 4, 64, 256, 0.1, false, Activation::kGelu};
  v.temporal_encoder = EncoderConfig{1, 4, 64, 256, 0.1, false, Activation::kGelu};
  return v;
}

ViViTConfig vivit_from(const json& j) {
  reject_unknown(j, {"variant", "tubelet", "spatial_encoder", "temporal_encoder"}, "vivit");
  auto variant = parse_vivit_variant(get_or<std::string>(j, "variant", "spatiotemporal"));
  ViViTConfig v = default_vivit(variant);
  if (j.contains("tubelet")) v.tubelet = tubelet_from(j.at("tubelet"));
  if (j.contains("spatial_encoder")) v.spatial_encoder = encoder_config_from_json(j.at("spatial_encoder"), v.spatial_encoder);
  if (j.contains("temporal_encoder")) {
    v.temporal_encoder = encoder_config_from_json(j.at("temporal_encoder"), v.temporal_encoder);
  }
  return v;
}

json fusion_json(const FusionStrategy& f) {
  json j = {{"kind", std::string(to_string(f.kind))}};
  switch (f.kind) {
    case FusionKind::kConcatFfn:
      j["ffn_hidden"] = f.ffn_hidden;
      j["ffn_out"] = f.ffn_out;
      j["ffn_activation"] = std::string(to_string(f.ffn_activation));
      break;
    case FusionKind::kTransformer: j["encoder"] = to_json(f.encoder); break;
    case FusionKind::kRecurrent: j["recurrent_hidden"] = f.recurrent_hidden; break;
    case FusionKind::kGap: break;
  }
  return j;
}

FusionStrategy fusion_from(const json& j) {
  reject_unknown(j, {"kind", "ffn_hidden", "ffn_out", "ffn_activation", "encoder", "recurrent_hidden"}, "fusion");
  FusionStrategy f;
  f.kind = parse_fusion_kind(get_or<std::string>(j, "kind", "concat_ffn"));
  f.ffn_hidden = get_or(j, "ffn_hidden", f.ffn_hidden);
  f.ffn_out = get_or(j, "ffn_out", f.ffn_out);
  f.ffn_activation = parse_activation(get_or<std::string>(j, "ffn_activation", "gelu"));
  if (j.contains("encoder")) f.encoder = encoder_config_from_json(j.at("encoder"), f.encoder);
  f.recurrent_hidden = get_or(j, "recurrent_hidden", f.recurrent_hidden);
  return f;
}

}  // namespace

json to_json(const EncoderConfig& c) {
  return {{"n_layers", c.n_layers}, {"n_heads", c.n_heads},           {"d_model", c.d_model},
          {"d_ff", c.d_ff},         {"dropout_rate", c.dropout_rate}, {"causal", c.causal},
          {"activation", std::string(to_string(c.activation))}};
}

EncoderConfig encoder_config_from_json(const json& j, const EncoderConfig& defaults) {
  reject_unknown(j, {"n_layers", "n_heads", "d_model", "d_ff", "dropout_rate", "causal", "activation"}, "encoder");
  EncoderConfig c = defaults;
  c.n_layers = get_or(j, "n_layers", c.n_layers);
  c.n_heads = get_or(j, "n_heads", c.n_heads);
  c.d_model = get_or(j, "d_model", c.d_model);
  c.d_ff = get_or(j, "d_ff", c.d_ff);
  c.dropout_rate = get_or(j, "dropout_rate", c.dropout_rate);
  c.causal = get_or(j, "causal", c.causal);
  c.activation = parse_activation(get_or<std::string>(j, "activation", std::string(to_string(c.activation))));
  return c;
}

json to_json(const ModelSpec& s) {
  json channels = json::array();
  for (auto c : s.channels) channels.push_back(std::string(to_string(c)));
  json vivit = json::object();
  for (auto input : kAllVisualInputs) {
    const auto& v = s.visual(input);
    vivit[std::string(to_string(input))] = v ? vivit_json(*v) : json(nullptr);
  }
  return {{"channels", channels},
          {"encoder", to_json(s.encoder)},
          {"use_feature_tokenizer", s.use_feature_tokenizer},
          {"causal", s.causal},
          {"vivit", vivit},
          {"fusion", fusion_json(s.fusion)},
          {"seed", s.seed}};
}

ModelSpec model_spec_from_json(const json& j) {
  if (j.is_string()) return named_config(j.get<std::string>());
  reject_unknown(j, {"preset", "channels", "encoder", "use_feature_tokenizer", "causal", "vivit", "fusion", "seed"},
                 "model");
  ModelSpec s;
  if (j.contains("preset")) s = named_config(get_or<std::string>(j, "preset", ""));
  if (j.contains("channels")) {
    s.channels.clear();
    for (const auto& c : j.at("channels")) {
      if (!c.is_string()) throw ConfigError("channels must be strings");
      s.channels.push_back(parse_channel(c.get<std::string>()));
    }
  }
  if (j.contains("encoder")) s.encoder = encoder_config_from_json(j.at("encoder"), s.encoder);
  s.use_feature_tokenizer = get_or(j, "use_feature_tokenizer", s.use_feature_tokenizer);
  s.causal = get_or(j, "causal", s.causal);
  if (j.contains("vivit")) {
    const auto& vj = j.at("vivit");
    if (!vj.is_object()) throw ConfigError("vivit must be an object keyed by visual input");
    for (const auto& [name, cfg] : vj.items()) {
      auto input = parse_visual_input(name);
      if (cfg.is_null()) {
        s.visual(input).reset();
      } else {
        s.visual(input) = vivit_from(cfg);
      }
    }
  }
  if (j.contains("fusion")) s.fusion = fusion_from(j.at("fusion"));
  s.seed = get_or(j, "seed", s.seed);
  return s;
}

// ---- named configurations ----------------------------------------------------

ModelSpec named_config(std::string_view name) {
  const EncoderConfig enc{2, 4, 64, 256, 0.1, false, Activation::kGelu};
  const std::vector<NonVisualChannel> all(kAllNonVisualChannels.begin(), kAllNonVisualChannels.end());
  FusionStrategy concat;
  concat.kind = FusionKind::kConcatFfn;
  FusionStrategy gap;
  gap.kind = FusionKind::kGap;

  ModelSpec s;
  s.encoder = enc;
  if (name == "ours1" || name == "ours3" || name == "ours9_causal") {
    s.channels = all;
    s.visual(VisualInput::kLocalSurround) = default_vivit(ViViTVariant::kSpatiotemporal);
    s.visual(VisualInput::kGlobalContext) = default_vivit(ViViTVariant::kSpatiotemporal);
    if (name == "ours3") s.visual(VisualInput::kLocalContext) = default_vivit(ViViTVariant::kSpatiotemporal);
    s.causal = name == "ours9_causal";
    s.fusion = concat;
  } else if (name == "ours2_nonvisual") {
    s.channels = all;
    s.fusion = gap;
  } else if (name == "ours4_factorised") {
    s.channels = {NonVisualChannel::kBbox, NonVisualChannel::kCenter, NonVisualChannel::kPose};
    s.visual(VisualInput::kLocalSurround) = default_vivit(ViViTVariant::kFactorised);
    s.visual(VisualInput::kGlobalContext) = default_vivit(ViViTVariant::kFactorised);
    s.fusion = gap;
  } else if (name == "ours6_bboxes") {
    s.channels = {NonVisualChannel::kBbox};
    s.fusion = gap;
  } else if (name == "ours8_ft") {
    s.channels = all;
    s.use_feature_tokenizer = true;
    s.fusion = concat;
  } else {
    std::string known;
    for (const char* n : kNamedConfigs) known += std::string(known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown model config '" + std::string(name) + "' (known: " + known + ")");
  }
  return s;
}

// ---- batches -------------------------------------------------------------------

template <typename T>
Batch<T> make_batch(const ModelSpec& spec, std::span<const ObservationWindow> windows,
                    std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("empty batch");
  Batch<T> batch;
  const std::size_t b = indices.size();
  for (std::size_t i : indices) {
    if (i >= windows.size()) throw ContractError("batch index out of range");
    batch.labels.push_back(windows[i].label);
  }
  if (spec.has_nonvisual()) {
    const std::size_t f = spec.feature_width();
    std::size_t steps = 0;
    std::vector<T> values;
    for (std::size_t n = 0; n < b; ++n) {
      const auto& w = windows[indices[n]];
      for (auto c : spec.channels) {
        if (w.channel(c).rows == 0) {
          throw InputError("window " + w.pedestrian_id + "@" + std::to_string(w.last_frame) + " is missing channel '" +
                           std::string(to_string(c)) + "'");
        }
      }
      auto m = assemble_nonvisual(w, spec.channels);
      if (n == 0) {
        steps = m.rows;
        values.reserve(b * steps * f);
      } else if (m.rows != steps) {
        throw DimensionError("windows in one batch must have equal length");
      }
      for (float v : m.values) values.push_back(static_cast<T>(v));
    }
    batch.nonvisual = Tensor<T>({b, steps, f}, std::move(values));
  }
  for (auto input : kAllVisualInputs) {
    if (!spec.visual(input)) continue;
    Shape shape;
    std::vector<T> values;
    for (std::size_t n = 0; n < b; ++n) {
      const auto& w = windows[indices[n]];
      const auto& clip = w.clip(input);
      if (!clip) {
        throw InputError("window " + w.pedestrian_id + "@" + std::to_string(w.last_frame) + " is missing clip '" +
                         std::string(to_string(input)) + "'");
      }
      Shape s{b, clip->frames, clip->height, clip->width, 3};
      if (n == 0) {
        shape = s;
        values.reserve(shape_numel(shape));
      } else if (s != shape) {
        throw DimensionError("clips in one batch must have equal size");
      }
      for (float v : clip->pixels) values.push_back(static_cast<T>(v));
    }
    batch.clips[std::size_t(input)] = Tensor<T>(shape, std::move(values));
  }
  return batch;
}

template <typename T>
Batch<T> make_batch(const ModelSpec& spec, std::span<const ObservationWindow> windows) {
  std::vector<std::size_t> idx(windows.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch<T>(spec, windows, idx);
}

// ---- model ----------------------------------------------------------------------

template <typename T>
Model<T> Model<T>::build(const ModelSpec& spec) {
  spec.validate();
  Model m;
  m.spec_ = spec;
  ParamInit init(spec.seed);
  const std::size_t d = spec.d_model();
  if (spec.has_nonvisual()) {
    if (spec.use_feature_tokenizer) {
      m.nv_tokenizer_ = FeatureTokenizer<T>::create(spec.feature_width(), d, init);
    } else {
      m.nv_proj_ = Linear<T>::create(spec.feature_width(), d, init);
    }
    EncoderConfig ec = spec.encoder;
    ec.causal = spec.causal;
    m.nv_encoder_ = Encoder<T>::create(ec, init);
  }
  for (auto input : kAllVisualInputs) {
    if (const auto& cfg = spec.visual(input)) m.vivit_[std::size_t(input)] = ViViT<T>::create(*cfg, init);
  }
  for (std::size_t i = 0; i < spec.branch_count(); ++i) m.branch_norms_.push_back(LayerNorm<T>::create(d));
  m.fusion_ = Fusion<T>::create(spec.fusion, d, spec.branch_count(), init);
  m.head_ = Head<T>::create(m.fusion_.out_features(), init);
  return m;
}

template <typename T>
Tensor<T> Model<T>::encode_nonvisual(const Tensor<T>& features, ForwardContext& ctx) const {
  if (!spec_.has_nonvisual()) throw ContractError("model has no non-visual branch");
  auto tokens = nv_tokenizer_ ? (*nv_tokenizer_)(features) : (*nv_proj_)(features);
  tokens = add(tokens, positional_encoding<T>(tokens.dim(1), tokens.dim(2)));
  return nv_encoder_(tokens, ctx).output;
}

template <typename T>
Tensor<T> Model<T>::forward(const Batch<T>& batch, ForwardContext& ctx) const {
  std::vector<BranchOutput<T>> branches;
  if (spec_.has_nonvisual()) {
    if (!batch.nonvisual) throw InputError("batch is missing non-visual features");
    if (batch.nonvisual->dim(-1) != spec_.feature_width()) {
      throw DimensionError("non-visual features have width " + std::to_string(batch.nonvisual->dim(-1)) +
                           ", model expects " + std::to_string(spec_.feature_width()));
    }
    branches.push_back({encode_nonvisual(*batch.nonvisual, ctx), nv_tokenizer_ ? PoolMode::kCls : PoolMode::kMean});
  }
  for (auto input : kAllVisualInputs) {
    const auto& v = vivit_[std::size_t(input)];
    if (!v) continue;
    const auto& clips = batch.clips[std::size_t(input)];
    if (!clips) throw InputError("batch is missing clip '" + std::string(to_string(input)) + "'");
    branches.push_back({(*v)(*clips, ctx).tokens, PoolMode::kMean});
  }
  for (std::size_t i = 0; i < branches.size(); ++i) branches[i].tokens = branch_norms_[i](branches[i].tokens);
  return head_(fusion_(branches, ctx));
}

template <typename T>
Tensor<T> Model<T>::forward(const Batch<T>& batch) const {
  ForwardContext ctx;
  return forward(batch, ctx);
}

template <typename T>
std::vector<double> Model<T>::predict(const Batch<T>& batch) const {
  NoGradGuard guard;
  auto p = forward(batch);
  return {p.data().begin(), p.data().end()};
}

template <typename T>
double Model<T>::predict(const ObservationWindow& window) const {
  return predict(make_batch<T>(spec_, std::span<const ObservationWindow>(&window, 1)))[0];
}

template <typename T>
ParameterList<T> Model<T>::named_parameters() const {
  ParameterList<T> out;
  if (nv_proj_) nv_proj_->collect("nonvisual.proj", out);
  if (nv_tokenizer_) nv_tokenizer_->collect("nonvisual.tokenizer", out);
  std::size_t branch = 0;
  if (spec_.has_nonvisual()) {
    nv_encoder_.collect("nonvisual.encoder", out);
    branch_norms_[branch++].collect("nonvisual.norm", out);
  }
  for (auto input : kAllVisualInputs) {
    const auto& v = vivit_[std::size_t(input)];
    if (!v) continue;
    const std::string prefix = "vivit." + std::string(to_string(input));
    v->collect(prefix, out);
    branch_norms_[branch++].collect(prefix + ".norm", out);
  }
  fusion_.collect("fusion", out);
  head_.collect("head", out);
  return out;
}

template <typename T>
std::vector<Tensor<T>> Model<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

template <typename T>
StateDict Model<T>::state() const {
  StateDict s;
  for (const auto& p : named_parameters()) {
    auto d = p.tensor.data();
    s.push_back({p.name, p.tensor.shape(), std::vector<float>(d.begin(), d.end())});
  }
  return s;
}

template <typename T>
void Model<T>::load_state(const StateDict& state) {
  auto params = named_parameters();
  if (state.size() != params.size()) {
    throw LoadError("checkpoint has " + std::to_string(state.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = state[i];
    auto& p = params[i];
    if (entry.name != p.name || entry.shape != p.tensor.shape()) {
      throw LoadError("checkpoint tensor '" + entry.name + "' " + shape_str(entry.shape) + " does not match '" +
                      p.name + "' " + shape_str(p.tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::transform(state[i].values.begin(), state[i].values.end(), dst.begin(),
                   [](float v) { return static_cast<T>(v); });
  }
}

#define PEDINTENT_INSTANTIATE_MODEL(T)                                                                      \
  template Batch<T> make_batch<T>(const ModelSpec&, std::span<const ObservationWindow>,                    \
                                  std::span<const std::size_t>);                                           \
  template Batch<T> make_batch<T>(const ModelSpec&, std::span<const ObservationWindow>);                   \
  template class Model<T>;

PEDINTENT_INSTANTIATE_MODEL(float)
PEDINTENT_INSTANTIATE_MODEL(double)

}  // namespace pedintent
