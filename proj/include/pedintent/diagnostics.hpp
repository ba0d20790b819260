#pragma once

// Whole-model gradient check at desk scale: two synthetic windows of four
// frames with 32x32 clips, loss = weighted_bce.

#include <cstdint>

#include "pedintent/gradcheck.hpp"
#include "pedintent/model.hpp"

namespace pedintent {

struct ModelGradCheck {
  DualGradCheckReport report;
  std::size_t tensors = 0;
};

// The float model is built from spec.seed and copied into the double model,
// so both precisions are checked at the same point.
ModelGradCheck check_model_gradients(const ModelSpec& spec, const GradCheckOptions& opts,
                                     std::uint64_t data_seed = 0);

}  // namespace pedintent
