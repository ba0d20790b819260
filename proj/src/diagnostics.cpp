#include "pedintent/diagnostics.hpp"

#include "pedintent/synthetic.hpp"
#include "pedintent/training.hpp"

namespace pedintent {

ModelGradCheck check_model_gradients(const ModelSpec& spec, const GradCheckOptions& opts, std::uint64_t data_seed) {
  spec.validate();
  SyntheticConfig sc;
  sc.seed = data_seed;
  sc.n_tracks = 2;
  ClipConfig cc;
  cc.local_context = spec.visual(VisualInput::kLocalContext).has_value();
  cc.local_surround = spec.visual(VisualInput::kLocalSurround).has_value();
  cc.global_context = spec.visual(VisualInput::kGlobalContext).has_value();
  const auto ws = synthetic_windows(sc, WindowConfig{4, 30, 30, 15}, cc);

  auto m32 = Model<float>::build(spec);
  auto m64 = Model<double>::build(spec);
  m64.load_state(m32.state());
  const auto b64 = make_batch<double>(spec, ws);
  const auto b32 = make_batch<float>(spec, ws);
  auto loss64 = [&] { return weighted_bce(m64.forward(b64), b64.labels); };
  auto loss32 = [&] { return weighted_bce(m32.forward(b32), b32.labels); };
  ModelGradCheck out;
  out.tensors = m64.parameters().size();
  out.report = check_parameter_gradients_dual(loss32, m32.parameters(), loss64, m64.parameters(), opts);
  return out;
}

}  // namespace pedintent
