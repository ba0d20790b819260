#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pedintent/errors.hpp"
#include "pedintent/metrics.hpp"
#include "support/fixtures.hpp"

using namespace pedintent;

TEST_CASE("threshold metrics on the worked example") {
  const auto r = evaluate({0.9, 0.8, 0.3, 0.6}, {1, 1, 0, 0});
  CHECK(r.tp == 2);
  CHECK(r.fp == 1);
  CHECK(r.tn == 1);
  CHECK(r.fn == 0);
  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.precision == doctest::Approx(2.0 / 3));
  CHECK(r.recall == doctest::Approx(1.0));
  CHECK(r.f1 == doctest::Approx(0.8));
  REQUIRE(r.auc);
  CHECK(*r.auc == doctest::Approx(1.0));
}

TEST_CASE("threshold boundary and zero denominators") {
  const auto r = evaluate({0.5, 0.49}, {1, 0});
  CHECK(r.tp == 1);
  CHECK(r.tn == 1);
  const auto none = evaluate({0.1, 0.2}, {0, 0});
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_FALSE(none.auc);
  CHECK(none.to_csv() == "Acc,AUC,F1,Precision,Recall\n1.000000,nan,0.000000,0.000000,0.000000\n");
  CHECK_THROWS_AS(evaluate({}, {}), ContractError);
  CHECK_THROWS_AS(evaluate({0.5}, {1, 0}), ContractError);
}

TEST_CASE("auc examples") {
  CHECK(*auc_rank({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(*auc_rank({0.2, 0.2, 0.2, 0.2}, {0, 1, 0, 1}) == doctest::Approx(0.5));
  CHECK(*auc_rank({0.9, 0.4, 0.6, 0.2}, {1, 0, 0, 1}) == doctest::Approx(0.5));
  CHECK(*auc_oracle({0.9, 0.4, 0.6, 0.2}, {1, 0, 0, 1}) == doctest::Approx(0.5));
  CHECK(*auc_rank({0.9, 0.8, 0.3, 0.2}, {1, 1, 0, 0}) == 1.0);
  CHECK(*auc_rank({0.1, 0.2, 0.3, 0.4}, {1, 0, 1, 0}) == doctest::Approx(0.25));
  CHECK_FALSE(auc_rank({0.1, 0.2}, {1, 1}));
  CHECK_FALSE(auc_oracle({0.1, 0.2}, {0, 0}));
}

TEST_CASE("rank auc agrees with the pairwise count") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 60;
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool coarse = trial % 3 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = coarse ? double(rng() % 5) / 4 : double(rng() % 1000000) / 1e6;
      y[i] = int(rng() % 2);
    }
    const auto a = auc_rank(s, y), b = auc_oracle(s, y);
    REQUIRE(a.has_value() == b.has_value());
    if (!a) continue;
    CHECK(std::abs(*a - *b) < 1e-12);

    auto flipped = y;
    for (auto& v : flipped) v = 1 - v;
    CHECK(std::abs(*auc_rank(s, flipped) - (1 - *a)) < 1e-12);
    auto squashed = s;
    for (auto& v : squashed) v = std::exp(3 * v) + 1;
    CHECK(std::abs(*auc_rank(squashed, y) - *a) < 1e-12);
  }
}

TEST_CASE("threshold zero and the f1 identity") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = double(rng() % 1000) / 1000;
      y[i] = int(rng() % 2);
      pos += std::size_t(y[i]);
    }
    CHECK(evaluate(s, y, 0.0).accuracy == doctest::Approx(double(pos) / double(n)));
    const auto r = evaluate(s, y);
    if (r.precision > 0 && r.recall > 0)
      CHECK(r.f1 == doctest::Approx(2 * r.precision * r.recall / (r.precision + r.recall)));
  }
}

TEST_CASE("metrics csv file") {
  testing::TempDir dir;
  const auto r = evaluate({0.9, 0.8, 0.3, 0.6}, {1, 1, 0, 0});
  r.save_csv(dir / "m.csv");
  const auto text = testing::read_text(dir / "m.csv");
  CHECK(text == r.to_csv());
  CHECK(text.rfind("Acc,AUC,F1,Precision,Recall\n0.750000,1.000000,0.800000,", 0) == 0);
}
