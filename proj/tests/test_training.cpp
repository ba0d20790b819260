#include <doctest.h>

#include <cmath>

#include "pedintent/errors.hpp"
#include "pedintent/synthetic.hpp"
#include "pedintent/training.hpp"
#include "support/op_suite.hpp"

using namespace pedintent;
using T64 = Tensor<double>;

namespace {

std::vector<int> labels_of(std::size_t pos, std::size_t neg) {
  std::vector<int> l(pos, 1);
  l.resize(pos + neg, 0);
  return l;
}

double eq3(const std::vector<double>& p, const std::vector<int>& y) {
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += y[i] * std::log(p[i]) + (1 - y[i]) * std::log(1 - p[i]);
  return -s / double(p.size());
}

std::vector<ObservationWindow> motion_windows(std::size_t tracks, std::uint64_t seed) {
  return synthetic_windows({.seed = seed, .n_tracks = tracks}, {4, 30, 30, 15});
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.batch_size = 8;
  c.lr = 1e-3;
  return c;
}

}  // namespace

TEST_CASE("class weights") {
  const auto w = class_weights(labels_of(30, 70));
  CHECK(w.positive == doctest::Approx(100.0 / 60));
  CHECK(w.negative == doctest::Approx(100.0 / 140));
  CHECK(30 * w.positive + 70 * w.negative == doctest::Approx(100.0));
  const auto even = class_weights(labels_of(50, 50));
  CHECK(even.positive == 1.0);
  CHECK(even.negative == 1.0);
  CHECK(w.of(1) == w.positive);
  CHECK_THROWS_AS(class_weights(labels_of(0, 5)), BalanceError);
}

TEST_CASE("weighted bce examples") {
  CHECK(weighted_bce({0.5, 0.5}, {1, 0}) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
  CHECK(weighted_bce({0.5, 0.5}, {1, 0}, {2.0, 1.0}) == doctest::Approx(1.0397207708399179).epsilon(1e-12));
  CHECK(weighted_bce({1.0, 0.0}, {1, 0}, {2.0, 3.0}) < 1e-6 * 5);
  CHECK_THROWS_AS(weighted_bce({0.5}, {1, 0}), ContractError);
  CHECK_THROWS_AS(weighted_bce(T64({1}, {0.5}), {1, 0}), ContractError);
  CHECK(weighted_bce(T64({2}, {0.5, 0.5}), {1, 0}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("unit weights reduce to plain binary cross-entropy") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> p(17);
    std::vector<int> y(17);
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] = u(rng);
      y[i] = int(rng() % 2);
    }
    const double ref = eq3(p, y);
    CHECK(std::abs(weighted_bce(p, y) - ref) <= 1e-7 * std::abs(ref));
    CHECK(std::abs(weighted_bce(T64({p.size()}, p), y).item() - ref) <= 1e-7 * std::abs(ref));
  }
}

TEST_CASE("adam") {
  T64 w = T64({3}, {1.0, -2.0, 0.5}).set_requires_grad(true);
  Adam<double> opt({{"w", w}}, 0.01);
  opt.step();
  CHECK(opt.step_count() == 1);
  CHECK(w.data()[0] == 1.0);

  backward(sum(scale(w, 3.0)));
  opt.step();
  for (std::size_t i = 0; i < 3; ++i) CHECK(opt.first_moments()[0][i] == doctest::Approx(0.3));

  T64 v = T64({2}, {1.0, 1.0}).set_requires_grad(true);
  Adam<double> fresh({{"v", v}}, 0.01);
  backward(sum(mul(v, T64({2}, {4.0, -0.5}))));
  fresh.step();
  CHECK(v.data()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-9));
  CHECK(v.data()[1] == doctest::Approx(1.0 + 0.01).epsilon(1e-9));

  T64 bad = T64({1}, {1.0}).set_requires_grad(true);
  Adam<double> broken({{"layer.weight", bad}}, 0.01);
  backward(sum(mul(bad, T64({1}, {1e308}))));
  backward(sum(mul(bad, T64({1}, {1e308}))));
  try {
    broken.step();
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("layer.weight") != std::string::npos);
  }
}

TEST_CASE("plateau scheduler traces") {
  PlateauScheduler p{5, 0.2, 1e-4};
  double lr = 3e-4;
  for (int epoch = 1; epoch <= 6; ++epoch) {
    lr = p.step(1.0, lr);
    CHECK(lr == (epoch < 6 ? 3e-4 : doctest::Approx(6e-5)));
  }
  PlateauScheduler dec{5, 0.2, 1e-4};
  lr = 3e-4;
  for (int epoch = 1; epoch <= 30; ++epoch) lr = dec.step(1.0 - 0.01 * epoch, lr);
  CHECK(lr == 3e-4);
  PlateauScheduler edge{5, 0.2, 1e-4};
  lr = 3e-4;
  for (double loss : {1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5}) lr = edge.step(loss, lr);
  CHECK(lr == 3e-4);
  CHECK(edge.step(0.5, lr) == doctest::Approx(6e-5));
}

TEST_CASE("early stopping traces") {
  EarlyStopping constant{15, 1e-4};
  int stopped_at = 0;
  for (int epoch = 1; epoch <= 100 && !stopped_at; ++epoch)
    if (constant.step(1.0)) stopped_at = epoch;
  CHECK(stopped_at == 16);
  EarlyStopping improving{15, 1e-4};
  for (int epoch = 1; epoch <= 100; ++epoch) CHECK_FALSE(improving.step(10.0 - 0.01 * epoch));
}

TEST_CASE("one step on one sample lowers its loss") {
  const auto spec = named_config("ours6_bboxes");
  auto model = Model<double>::build(spec);
  const auto ws = motion_windows(1, 3);
  const auto batch = make_batch<double>(spec, ws);
  Adam<double> opt(model.named_parameters(), 1e-3);
  const double before = weighted_bce(model.forward(batch), batch.labels).item();
  backward(weighted_bce(model.forward(batch), batch.labels));
  opt.step();
  CHECK(weighted_bce(model.forward(batch), batch.labels).item() < before);
}

TEST_CASE("training history, determinism and restored weights") {
  const auto spec = named_config("ours6_bboxes");
  const auto train_set = motion_windows(40, 1), val_set = motion_windows(12, 2);
  auto cfg = quick(8);
  cfg.plateau_patience = 1;
  cfg.early_stop_patience = 3;
  cfg.min_delta = 0.5;
  auto a = Model<float>::build(spec), b = Model<float>::build(spec);
  std::size_t seen = 0;
  const auto ra = train(a, train_set, val_set, cfg, [&](const EpochRecord&) { ++seen; });
  const auto rb = train(b, train_set, val_set, cfg);
  CHECK(seen == ra.history.epochs.size());
  CHECK(ra.history.to_csv() == rb.history.to_csv());
  CHECK(a.state() == b.state());
  CHECK(ra.stopped_early);
  CHECK(ra.history.epochs.size() == 4);
  CHECK(ra.best_epoch == 1);
  for (std::size_t i = 1; i < ra.history.epochs.size(); ++i)
    CHECK(ra.history.epochs[i].lr <= ra.history.epochs[i - 1].lr);
  CHECK(ra.history.epochs[1].lr == cfg.lr);
  CHECK(ra.history.epochs[2].lr == doctest::Approx(cfg.lr * cfg.plateau_factor));
  CHECK(evaluate_loss(a, val_set, cfg.batch_size) == ra.best_val_loss);
  CHECK(ra.history.to_csv().rfind("epoch,train_loss,val_loss,lr\n1,", 0) == 0);
}

TEST_CASE("training learns the motion rule") {
  const auto spec = named_config("ours6_bboxes");
  auto m = Model<float>::build(spec);
  const auto tr = motion_windows(60, 5);
  const auto r = train(m, tr, {}, quick(15));
  CHECK(r.history.epochs.back().train_loss < r.history.epochs.front().train_loss);
  const auto p = predict_all(m, tr);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += (p[i] >= 0.5) == (tr[i].label == 1);
  CHECK(double(correct) / double(p.size()) > 0.9);
}

TEST_CASE("finetune") {
  const auto spec = named_config("ours6_bboxes");
  const auto tr = motion_windows(20, 6);
  auto m = Model<float>::build(spec);
  const auto before = m.state();
  auto cfg = quick(0);
  const auto none = finetune(m, tr, {}, cfg);
  CHECK(none.history.epochs.empty());
  CHECK(m.state() == before);

  cfg = quick(3);
  auto a = Model<float>::build(spec), b = Model<float>::build(spec);
  train(a, tr, {}, quick(2));
  b.load_state(a.state());
  const auto ra = finetune(a, tr, {}, cfg);
  auto forced = cfg;
  forced.use_class_weights = false;
  forced.plateau_factor = 0.1;
  const auto rb = train(b, tr, {}, forced);
  CHECK(ra.history.to_csv() == rb.history.to_csv());
  CHECK(a.state() == b.state());
}

TEST_CASE("ensemble head") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<std::array<double, 3>> probs;
  std::vector<int> labels;
  for (int i = 0; i < 200; ++i) {
    const int y = int(rng() % 2);
    probs.push_back({y ? 0.6 + 0.4 * u(rng) : 0.4 * u(rng), u(rng), u(rng)});
    labels.push_back(y);
  }
  auto cfg = quick(60);
  cfg.lr = 0.05;
  const auto r = train_ensemble_head(probs, labels, {}, {}, cfg);
  CHECK(r.head.w[0] > std::abs(r.head.w[1]));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) correct += (r.head.predict(probs[i]) >= 0.5) == (labels[i] == 1);
  CHECK(correct > 190);
  const auto again = train_ensemble_head(probs, labels, {}, {}, cfg);
  CHECK(again.head.w == r.head.w);
  CHECK(again.head.b == r.head.b);
  const auto back = EnsembleHead::from_state(r.head.state());
  CHECK(back.w[0] == float(r.head.w[0]));
  CHECK_THROWS_AS(EnsembleHead::from_state({}), LoadError);
  CHECK_THROWS_AS(train_ensemble_head(probs, {1}, {}, {}, cfg), ContractError);
}

TEST_CASE("train config") {
  TrainConfig c;
  CHECK(train_config_from_json(to_json(c)) == c);
  const auto j = nlohmann::json::parse(R"({"lr": 0.01, "max_epochs": 7})");
  const auto d = train_config_from_json(j);
  CHECK(d.lr == 0.01);
  CHECK(d.max_epochs == 7);
  CHECK(d.batch_size == 32);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::parse(R"({"learning_rate": 1})")), ConfigError);
  c.plateau_factor = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
