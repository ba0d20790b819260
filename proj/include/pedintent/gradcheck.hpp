#pragma once

// Central finite-difference oracle for the autodiff engine.
//
// Finite differences are always evaluated in 64-bit. The "f32" variants take
// their analytic gradient from the 32-bit instantiation of the same function,
// so they measure float autodiff against a double-precision oracle.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "pedintent/errors.hpp"
#include "pedintent/tensor.hpp"

namespace pedintent {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<double> rel_errors;
  std::vector<double> analytic;
  std::vector<double> numeric;

  bool passed(double tolerance) const { return checked > 0 && max_rel_error < tolerance; }
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Gradients smaller than this are compared on an absolute scale; otherwise
  // roundoff in near-zero components dominates the ratio.
  double denominator_floor = 1e-4;
  // 0 checks every element; otherwise a seeded subset of each tensor.
  std::size_t max_elements_per_tensor = 0;
  std::uint64_t sample_seed = 0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace detail {

// Non-scalar outputs are reduced with fixed, distinct, nonzero weights so
// every output element contributes to the checked scalar.
template <typename T>
Tensor<T> reduce_to_scalar(const Tensor<T>& y) {
  if (y.numel() == 1) return reshape(y, Shape{});
  std::vector<T> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(0.5 + std::fmod(0.6180339887 * double(i + 1), 1.0));
  return sum(mul(y, Tensor<T>(y.shape(), std::move(w))));
}

inline std::vector<std::size_t> pick_elements(std::size_t n, const GradCheckOptions& opts, std::uint64_t salt) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (opts.max_elements_per_tensor == 0 || n <= opts.max_elements_per_tensor) return all;
  std::mt19937_64 rng(opts.sample_seed ^ (salt * 0x9E3779B97F4A7C15ULL));
  std::vector<std::size_t> picked;
  std::sample(all.begin(), all.end(), std::back_inserter(picked), opts.max_elements_per_tensor, rng);
  return picked;
}

inline void finalize(GradCheckReport& r) {
  r.checked = r.rel_errors.size();
  if (r.checked == 0) return;
  r.max_rel_error = *std::max_element(r.rel_errors.begin(), r.rel_errors.end());
  r.mean_rel_error = std::accumulate(r.rel_errors.begin(), r.rel_errors.end(), 0.0) / double(r.checked);
}

template <class LossFn>
double eval_no_grad(LossFn& loss) {
  NoGradGuard guard;
  return static_cast<double>(loss().item());
}

template <class LossFn>
void require_deterministic(LossFn& loss) {
  const double a = eval_no_grad(loss);
  const double b = eval_no_grad(loss);
  if (a != b && !(std::isnan(a) && std::isnan(b))) {
    throw DeterminismError("gradient check: two forward passes of the same input differ");
  }
}

struct NumericSample {
  std::size_t tensor, element;
  double value;
};

// Central differences of loss64 at the sampled elements of params64.
template <class LossFn>
std::vector<NumericSample> numeric_gradients(LossFn& loss64, std::vector<Tensor<double>>& params64,
                                             const GradCheckOptions& opts) {
  std::vector<NumericSample> out;
  for (std::size_t t = 0; t < params64.size(); ++t) {
    auto values = params64[t].mutable_data();
    for (std::size_t i : pick_elements(values.size(), opts, t + 1)) {
      const double saved = values[i];
      values[i] = saved + opts.eps;
      const double up = eval_no_grad(loss64);
      values[i] = saved - opts.eps;
      const double down = eval_no_grad(loss64);
      values[i] = saved;
      out.push_back({t, i, (up - down) / (2.0 * opts.eps)});
    }
  }
  return out;
}

inline GradCheckReport compare(const std::vector<NumericSample>& numeric,
                               const std::vector<std::vector<double>>& analytic, const GradCheckOptions& opts) {
  GradCheckReport report;
  for (const auto& s : numeric) {
    const double a = analytic[s.tensor][s.element];
    report.analytic.push_back(a);
    report.numeric.push_back(s.value);
    report.rel_errors.push_back(relative_error(a, s.value, opts.denominator_floor));
  }
  finalize(report);
  return report;
}

template <typename T, class LossFn>
std::vector<std::vector<double>> analytic_gradients(LossFn& loss, std::vector<Tensor<T>>& params) {
  for (auto& p : params) p.zero_grad();
  backward(loss());
  std::vector<std::vector<double>> out;
  for (auto& p : params) {
    auto g = p.grad();
    out.emplace_back(g.begin(), g.end());
  }
  return out;
}

}  // namespace detail

// `loss` is a nullary callable returning a scalar Tensor<double> built from
// `params` (which must be tracked leaves).
template <class LossFn>
GradCheckReport check_parameter_gradients(LossFn&& loss, std::vector<Tensor<double>> params,
                                          const GradCheckOptions& opts = {}) {
  detail::require_deterministic(loss);
  const auto analytic = detail::analytic_gradients<double>(loss, params);
  return detail::compare(detail::numeric_gradients(loss, params, opts), analytic, opts);
}

// Analytic gradients from the 32-bit graph, numeric ones from the 64-bit
// graph. params32[i] and params64[i] must hold the same values.
template <class Loss32, class Loss64>
GradCheckReport check_parameter_gradients_f32(Loss32&& loss32, std::vector<Tensor<float>> params32,
                                              Loss64&& loss64, std::vector<Tensor<double>> params64,
                                              const GradCheckOptions& opts = {}) {
  if (params32.size() != params64.size()) throw ContractError("gradient check: parameter lists differ");
  detail::require_deterministic(loss64);
  const auto analytic = detail::analytic_gradients<float>(loss32, params32);
  return detail::compare(detail::numeric_gradients(loss64, params64, opts), analytic, opts);
}

struct DualGradCheckReport {
  GradCheckReport f64;
  GradCheckReport f32;
};

// Both precisions against one set of 64-bit central differences.
template <class Loss32, class Loss64>
DualGradCheckReport check_parameter_gradients_dual(Loss32&& loss32, std::vector<Tensor<float>> params32,
                                                   Loss64&& loss64, std::vector<Tensor<double>> params64,
                                                   const GradCheckOptions& opts = {}) {
  if (params32.size() != params64.size()) throw ContractError("gradient check: parameter lists differ");
  detail::require_deterministic(loss64);
  const auto a64 = detail::analytic_gradients<double>(loss64, params64);
  const auto a32 = detail::analytic_gradients<float>(loss32, params32);
  const auto numeric = detail::numeric_gradients(loss64, params64, opts);
  return {detail::compare(numeric, a64, opts), detail::compare(numeric, a32, opts)};
}

// Checks d sum_w(f(x)) / dx for a single input tensor, in 64-bit.
template <class F>
GradCheckReport check_gradients(F&& f, const Tensor<double>& x, double eps = 1e-5,
                                double denominator_floor = 1e-4) {
  if (eps < 1e-6 || eps > 1e-3) throw ContractError("gradient check: eps must lie in [1e-6, 1e-3]");
  Tensor<double> leaf = x.detach().set_requires_grad(true);
  auto loss = [&] { return detail::reduce_to_scalar(f(leaf)); };
  GradCheckOptions opts;
  opts.eps = eps;
  opts.denominator_floor = denominator_floor;
  return check_parameter_gradients(loss, {leaf}, opts);
}

// As check_gradients, with the analytic side computed in 32-bit. `f` must be
// callable with both Tensor<float> and Tensor<double>.
template <class F>
GradCheckReport check_gradients_f32(F&& f, const Tensor<double>& x, double eps = 1e-5,
                                    double denominator_floor = 1e-4) {
  if (eps < 1e-6 || eps > 1e-3) throw ContractError("gradient check: eps must lie in [1e-6, 1e-3]");
  Tensor<float> leaf32 = x.cast<float>().set_requires_grad(true);
  // Evaluate the oracle at the float-representable point.
  Tensor<double> leaf64 = leaf32.cast<double>().set_requires_grad(true);
  auto loss32 = [&] { return detail::reduce_to_scalar(f(leaf32)); };
  auto loss64 = [&] { return detail::reduce_to_scalar(f(leaf64)); };
  GradCheckOptions opts;
  opts.eps = eps;
  opts.denominator_floor = denominator_floor;
  return check_parameter_gradients_f32(loss32, {leaf32}, loss64, {leaf64}, opts);
}

}  // namespace pedintent
