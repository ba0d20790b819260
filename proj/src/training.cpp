#include "pedintent/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "pedintent/errors.hpp"

namespace pedintent {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw ConfigError("plateau_factor must lie in (0, 1)");
  if (plateau_patience < 1 || early_stop_patience < 1) throw ConfigError("patiences must be at least 1");
  if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be non-negative");
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"plateau_patience", c.plateau_patience},
          {"plateau_factor", c.plateau_factor},
          {"early_stop_patience", c.early_stop_patience},
          {"use_class_weights", c.use_class_weights},
          {"seed", c.seed},
          {"min_delta", c.min_delta}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& defaults) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  TrainConfig c = defaults;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "lr") c.lr = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "plateau_patience") c.plateau_patience = value.get<std::size_t>();
      else if (key == "plateau_factor") c.plateau_factor = value.get<double>();
      else if (key == "early_stop_patience") c.early_stop_patience = value.get<std::size_t>();
      else if (key == "use_class_weights") c.use_class_weights = value.get<bool>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "min_delta") c.min_delta = value.get<double>();
      else throw ConfigError("train: unknown field '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("train." + key + ": " + e.what());
    }
  }
  return c;
}

ClassWeights class_weights(const std::vector<int>& labels) {
  const double n = double(labels.size());
  const double pos = double(std::count(labels.begin(), labels.end(), 1));
  const double neg = n - pos;
  if (pos == 0 || neg == 0) throw BalanceError("class weights need both classes present");
  return {n / (2.0 * neg), n / (2.0 * pos)};
}

template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& probs, const std::vector<int>& labels, const ClassWeights& weights) {
  if (probs.numel() != labels.size()) {
    throw ContractError("bce: " + std::to_string(probs.numel()) + " probabilities vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("bce over an empty batch");
  const std::size_t n = labels.size();
  std::vector<T> wy(n), wn(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T w = static_cast<T>(weights.of(labels[i]));
    wy[i] = labels[i] ? w : T(0);
    wn[i] = labels[i] ? T(0) : w;
  }
  const Shape s{n};
  auto p = clamp(reshape(probs, s), static_cast<T>(kProbClamp), static_cast<T>(1.0 - kProbClamp));
  auto log_p = log(p);
  auto log_q = log(add_scalar(scale(p, T(-1)), T(1)));
  auto terms = add(mul(Tensor<T>(s, std::move(wy)), log_p), mul(Tensor<T>(s, std::move(wn)), log_q));
  return scale(sum(terms), static_cast<T>(-1.0 / double(n)));
}

double weighted_bce(const std::vector<double>& probs, const std::vector<int>& labels, const ClassWeights& weights) {
  if (probs.size() != labels.size()) throw ContractError("bce: length mismatch");
  if (labels.empty()) throw ContractError("bce over an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    total += weights.of(labels[i]) * (labels[i] ? std::log(p) : std::log(1.0 - p));
  }
  return -total / double(probs.size());
}

// ---- Adam ----------------------------------------------------------------------

template <typename T>
Adam<T>::Adam(ParameterList<T> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

template <typename T>
void Adam<T>::step() {
  for (const auto& p : params_) {
    for (T g : p.tensor.grad()) {
      if (!std::isfinite(double(g))) throw NumericalError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& param = params_[k].tensor;
    auto g = param.grad();
    auto w = param.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = double(g[i]);
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] = static_cast<T>(double(w[i]) - lr_ * m_hat / (std::sqrt(v_hat) + eps_));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

// ---- callbacks -----------------------------------------------------------------

double PlateauScheduler::step(double loss, double lr) {
  if (loss < best - min_delta) {
    best = loss;
    wait = 0;
    return lr;
  }
  if (++wait >= patience) {
    wait = 0;
    return lr * factor;
  }
  return lr;
}

bool EarlyStopping::step(double loss) {
  last_improved = loss < best - min_delta;
  if (last_improved) {
    best = loss;
    wait = 0;
    return false;
  }
  return ++wait >= patience;
}

std::string History::to_csv() const {
  std::string out = "epoch,train_loss,val_loss,lr\n";
  char buf[128];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
    out += buf;
  }
  return out;
}

void History::save_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << to_csv();
}

// ---- training loop ---------------------------------------------------------------

namespace {

template <typename T>
std::vector<std::vector<T>> snapshot(const ParameterList<T>& params) {
  std::vector<std::vector<T>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

template <typename T>
void restore(ParameterList<T>& params, const std::vector<std::vector<T>>& values) {
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto dst = params[k].tensor.mutable_data();
    std::copy(values[k].begin(), values[k].end(), dst.begin());
  }
}

// Shared epoch loop. batch_loss builds the training loss of the given rows;
// monitor returns the per-epoch loss the callbacks watch.
template <typename T, class BatchLoss, class Monitor>
TrainResult run_loop(ParameterList<T> params, std::size_t n_train, const TrainConfig& cfg, BatchLoss&& batch_loss,
                     Monitor&& monitor, const EpochCallback& on_epoch) {
  cfg.validate();
  if (n_train == 0) throw ContractError("training set is empty");
  Adam<T> adam(params, cfg.lr);
  PlateauScheduler plateau{cfg.plateau_patience, cfg.plateau_factor, cfg.min_delta};
  EarlyStopping stopper{cfg.early_stop_patience, cfg.min_delta};
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);
  ForwardContext ctx{true, &dropout_rng};

  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<T>> best_weights;
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
      const std::size_t end = std::min(n_train, start + cfg.batch_size);
      std::vector<std::size_t> rows(order.begin() + std::ptrdiff_t(start), order.begin() + std::ptrdiff_t(end));
      adam.zero_grad();
      auto loss = batch_loss(rows, ctx);
      const double value = double(loss.item());
      if (!std::isfinite(value)) throw NumericalError("training loss became non-finite at epoch " + std::to_string(epoch));
      backward(loss);
      adam.step();
      total += value * double(rows.size());
    }
    EpochRecord rec{epoch, total / double(n_train), 0.0, adam.lr()};
    rec.val_loss = monitor(rec.train_loss);
    result.history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool stop = stopper.step(rec.val_loss);
    if (stopper.last_improved) {
      best_weights = snapshot(params);
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
    }
    if (stop) {
      result.stopped_early = true;
      break;
    }
    adam.set_lr(plateau.step(rec.val_loss, adam.lr()));
  }
  if (!best_weights.empty()) restore(params, best_weights);
  return result;
}

}  // namespace

template <typename T>
std::vector<double> predict_all(const Model<T>& model, const std::vector<ObservationWindow>& windows,
                                std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    const std::size_t end = std::min(windows.size(), start + batch_size);
    std::vector<std::size_t> rows(end - start);
    std::iota(rows.begin(), rows.end(), start);
    auto p = model.predict(make_batch<T>(model.spec(), windows, rows));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
double evaluate_loss(const Model<T>& model, const std::vector<ObservationWindow>& windows, std::size_t batch_size) {
  if (windows.empty()) throw ContractError("cannot evaluate loss on an empty set");
  std::vector<int> labels;
  for (const auto& w : windows) labels.push_back(w.label);
  return weighted_bce(predict_all(model, windows, batch_size), labels);
}

template <typename T>
TrainResult train(Model<T>& model, const std::vector<ObservationWindow>& train_set,
                  const std::vector<ObservationWindow>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  std::vector<int> labels;
  for (const auto& w : train_set) labels.push_back(w.label);
  const ClassWeights weights = cfg.use_class_weights ? class_weights(labels) : ClassWeights{};
  auto batch_loss = [&](const std::vector<std::size_t>& rows, ForwardContext& ctx) {
    auto batch = make_batch<T>(model.spec(), train_set, rows);
    return weighted_bce(model.forward(batch, ctx), batch.labels, weights);
  };
  auto monitor = [&](double train_loss) {
    return val_set.empty() ? train_loss : evaluate_loss(model, val_set, cfg.batch_size);
  };
  return run_loop<T>(model.named_parameters(), train_set.size(), cfg, batch_loss, monitor, on_epoch);
}

template <typename T>
TrainResult finetune(Model<T>& model, const std::vector<ObservationWindow>& train_set,
                     const std::vector<ObservationWindow>& val_set, TrainConfig cfg, const EpochCallback& on_epoch) {
  cfg.use_class_weights = false;
  cfg.plateau_factor = 0.1;
  if (cfg.max_epochs == 0) return {};
  return train(model, train_set, val_set, cfg, on_epoch);
}

// ---- ensemble head ---------------------------------------------------------------

double EnsembleHead::predict(const std::array<double, 3>& p) const {
  return ensemble_predict({p[0], p[1], p[2]}, {w[0], w[1], w[2]}, b);
}

StateDict EnsembleHead::state() const {
  return {{"ensemble.weight", {3, 1}, {float(w[0]), float(w[1]), float(w[2])}}, {"ensemble.bias", {1}, {float(b)}}};
}

EnsembleHead EnsembleHead::from_state(const StateDict& state) {
  if (state.size() != 2 || state[0].name != "ensemble.weight" || state[0].shape != Shape{3, 1} ||
      state[1].name != "ensemble.bias" || state[1].shape != Shape{1}) {
    throw LoadError("not an ensemble head checkpoint");
  }
  EnsembleHead h;
  for (std::size_t i = 0; i < 3; ++i) h.w[i] = state[0].values[i];
  h.b = state[1].values[0];
  return h;
}

EnsembleResult train_ensemble_head(const std::vector<std::array<double, 3>>& train_probs,
                                   const std::vector<int>& train_labels,
                                   const std::vector<std::array<double, 3>>& val_probs,
                                   const std::vector<int>& val_labels, const TrainConfig& cfg,
                                   const EpochCallback& on_epoch) {
  if (train_probs.size() != train_labels.size() || val_probs.size() != val_labels.size()) {
    throw ContractError("ensemble: probabilities and labels differ in length");
  }
  ParamInit init(cfg.seed);
  Linear<double> layer = Linear<double>::create(3, 1, init);
  ParameterList<double> params;
  layer.collect("ensemble", params);
  const ClassWeights weights = cfg.use_class_weights ? class_weights(train_labels) : ClassWeights{};

  auto rows_tensor = [](const std::vector<std::array<double, 3>>& probs, const std::vector<std::size_t>& rows) {
    std::vector<double> v;
    for (std::size_t r : rows) v.insert(v.end(), probs[r].begin(), probs[r].end());
    return Tensor<double>({rows.size(), 3}, std::move(v));
  };
  auto batch_loss = [&](const std::vector<std::size_t>& rows, ForwardContext&) {
    std::vector<int> labels;
    for (std::size_t r : rows) labels.push_back(train_labels[r]);
    auto p = reshape(sigmoid(layer(rows_tensor(train_probs, rows))), {rows.size()});
    return weighted_bce(p, labels, weights);
  };
  auto head_of = [&] {
    EnsembleHead h;
    for (std::size_t i = 0; i < 3; ++i) h.w[i] = layer.weight.data()[i];
    h.b = layer.bias.data()[0];
    return h;
  };
  auto monitor = [&](double train_loss) {
    if (val_probs.empty()) return train_loss;
    const EnsembleHead h = head_of();
    std::vector<double> p;
    for (const auto& row : val_probs) p.push_back(h.predict(row));
    return weighted_bce(p, val_labels);
  };
  EnsembleResult r;
  r.train = run_loop<double>(params, train_probs.size(), cfg, batch_loss, monitor, on_epoch);
  r.head = head_of();
  return r;
}

#define PEDINTENT_INSTANTIATE_TRAINING(T)                                                                   \
  template Tensor<T> weighted_bce<T>(const Tensor<T>&, const std::vector<int>&, const ClassWeights&);      \
  template class Adam<T>;                                                                                  \
  template double evaluate_loss<T>(const Model<T>&, const std::vector<ObservationWindow>&, std::size_t);   \
  template std::vector<double> predict_all<T>(const Model<T>&, const std::vector<ObservationWindow>&,      \
                                              std::size_t);                                                \
  template TrainResult train<T>(Model<T>&, const std::vector<ObservationWindow>&,                          \
                                const std::vector<ObservationWindow>&, const TrainConfig&,                 \
                                const EpochCallback&);                                                     \
  template TrainResult finetune<T>(Model<T>&, const std::vector<ObservationWindow>&,                       \
                                   const std::vector<ObservationWindow>&, TrainConfig, const EpochCallback&);

PEDINTENT_INSTANTIATE_TRAINING(float)
PEDINTENT_INSTANTIATE_TRAINING(double)

}  // namespace pedintent
