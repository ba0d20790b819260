#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pedintent/gradcheck.hpp"

namespace pedintent::testing {

// Uniform values in [lo, hi), rounded through float so the same point is
// representable in both precisions.
Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

struct OpCheck {
  std::string name;
  GradCheckReport f64;
  GradCheckReport f32;
};

// Finite-difference checks of every differentiable tensor op on random inputs,
// in both precisions.
std::vector<OpCheck> check_all_ops(std::uint64_t seed);

}  // namespace pedintent::testing
