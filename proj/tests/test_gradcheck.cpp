#include <doctest.h>

#include <cmath>

#include "pedintent/errors.hpp"
#include "pedintent/gradcheck.hpp"
#include "support/op_suite.hpp"

using namespace pedintent;

TEST_CASE("every op passes the finite-difference check in both precisions") {
  for (std::uint64_t seed : {0u, 1u}) {
    for (const auto& c : testing::check_all_ops(seed)) {
      CAPTURE(c.name);
      CAPTURE(seed);
      CHECK(c.f64.checked > 0);
      CHECK(c.f64.max_rel_error < 1e-5);
      CHECK(c.f32.max_rel_error < 1e-3);
    }
  }
}

TEST_CASE("sum of sigmoid at eps 1e-4") {
  std::mt19937_64 rng(2);
  auto x = testing::random_tensor({10}, rng, -3, 3);
  auto r = check_gradients([](const Tensor<double>& t) { return sum(sigmoid(t)); }, x, 1e-4);
  CHECK(r.checked == 10);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("linear functions are exact up to rounding") {
  std::mt19937_64 rng(4);
  auto x = testing::random_tensor({3, 4}, rng);
  auto w = testing::random_tensor({4, 2}, rng);
  auto r = check_gradients([&](const Tensor<double>& t) { return matmul(t, w); }, x);
  CHECK(r.max_rel_error < 1e-9);
}

TEST_CASE("softmax and matmul chain") {
  std::mt19937_64 rng(6);
  auto x = testing::random_tensor({3, 4}, rng);
  auto w = testing::random_tensor({4, 5}, rng);
  auto r = check_gradients([&](const Tensor<double>& t) { return softmax(matmul(t, w), -1); }, x);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("a wrong backward rule is caught") {
  std::mt19937_64 rng(8);
  auto x = testing::random_tensor({4}, rng, 0.5, 1.5);
  // d/dx x^3 computed as x*x*x vs. a function whose tape sees a detached factor
  auto r = check_gradients(
      [](const Tensor<double>& t) { return mul(mul(t, t), t.detach()); }, x);
  CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("non-deterministic functions are rejected") {
  int calls = 0;
  auto x = Tensor<double>({2}, {1, 2});
  auto f = [&](const Tensor<double>& t) { return scale(t, double(++calls)); };
  CHECK_THROWS_AS(check_gradients(f, x), DeterminismError);
}

TEST_CASE("eps outside the allowed range") {
  auto x = Tensor<double>({2}, {1, 2});
  auto f = [](const Tensor<double>& t) { return sum(t); };
  CHECK_THROWS_AS(check_gradients(f, x, 1e-8), ContractError);
  CHECK_THROWS_AS(check_gradients(f, x, 1e-2), ContractError);
}

TEST_CASE("relative error uses the denominator floor") {
  CHECK(relative_error(1.0, 1.001, 1e-4) == doctest::Approx(0.001 / 1.001));
  CHECK(relative_error(1e-9, 2e-9, 1e-4) == doctest::Approx(1e-5));
}
