#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pedintent/checkpoint.hpp"
#include "pedintent/data_model.hpp"
#include "pedintent/embeddings.hpp"
#include "pedintent/encoder.hpp"
#include "pedintent/fusion.hpp"
#include "pedintent/vivit.hpp"

namespace pedintent {

struct ModelSpec {
  std::vector<NonVisualChannel> channels;  // empty disables the non-visual branch
  EncoderConfig encoder;                    // non-visual encoder; causality comes from `causal`
  bool use_feature_tokenizer = false;
  bool causal = false;
  std::array<std::optional<ViViTConfig>, 3> vivit;  // indexed like kAllVisualInputs
  FusionStrategy fusion;
  std::uint64_t seed = 0;

  std::size_t feature_width() const;
  bool has_nonvisual() const { return !channels.empty(); }
  const std::optional<ViViTConfig>& visual(VisualInput input) const { return vivit[std::size_t(input)]; }
  std::optional<ViViTConfig>& visual(VisualInput input) { return vivit[std::size_t(input)]; }
  std::size_t branch_count() const;
  std::size_t d_model() const;

  // Every violated invariant, empty if a model can be built from it.
  std::vector<std::string> violations() const;
  void validate() const;  // throws ConfigError listing all violations

  bool operator==(const ModelSpec&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);  // throws ConfigError

nlohmann::json to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j, const EncoderConfig& defaults = {});

inline constexpr std::array<const char*, 7> kNamedConfigs = {
    "ours1", "ours2_nonvisual", "ours3", "ours4_factorised", "ours6_bboxes", "ours8_ft", "ours9_causal"};
ModelSpec named_config(std::string_view name);  // throws ConfigError

// Model inputs for a batch of windows.
template <typename T>
struct Batch {
  std::optional<Tensor<T>> nonvisual;               // B x steps x F
  std::array<std::optional<Tensor<T>>, 3> clips;    // B x frames x H x W x 3
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

// Gathers windows[indices] into tensors for the branches `spec` enables.
// Throws InputError naming the first missing channel or clip.
template <typename T>
Batch<T> make_batch(const ModelSpec& spec, std::span<const ObservationWindow> windows,
                    std::span<const std::size_t> indices);
template <typename T>
Batch<T> make_batch(const ModelSpec& spec, std::span<const ObservationWindow> windows);

template <typename T>
class Model {
 public:
  static Model build(const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }

  // Crossing probabilities, shape (B).
  Tensor<T> forward(const Batch<T>& batch, ForwardContext& ctx) const;
  Tensor<T> forward(const Batch<T>& batch) const;
  // Eval-mode probabilities without recording a graph.
  std::vector<double> predict(const Batch<T>& batch) const;
  double predict(const ObservationWindow& window) const;

  // Non-visual encoder output (B x S x d), positional encoding included,
  // before the branch norm.
  Tensor<T> encode_nonvisual(const Tensor<T>& features, ForwardContext& ctx) const;

  ParameterList<T> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::size_t parameter_count() const;

  StateDict state() const;
  // Throws LoadError on any name or shape mismatch.
  void load_state(const StateDict& state);

 private:
  ModelSpec spec_;
  std::optional<Linear<T>> nv_proj_;
  std::optional<FeatureTokenizer<T>> nv_tokenizer_;
  Encoder<T> nv_encoder_;
  std::array<std::optional<ViViT<T>>, 3> vivit_;
  std::vector<LayerNorm<T>> branch_norms_;  // one per branch, applied before fusion
  Fusion<T> fusion_;
  Head<T> head_;
};

}  // namespace pedintent
