#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "pedintent/checkpoint.hpp"
#include "pedintent/model.hpp"

namespace pedintent {

struct TrainConfig {
  double lr = 3e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  std::size_t plateau_patience = 5;
  double plateau_factor = 0.2;
  std::size_t early_stop_patience = 15;
  bool use_class_weights = true;
  std::uint64_t seed = 0;
  double min_delta = 1e-4;

  void validate() const;  // throws ConfigError
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {});

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;

  double of(int label) const { return label ? positive : negative; }
};

// w_c = n / (2 n_c). Throws BalanceError if a class is absent.
ClassWeights class_weights(const std::vector<int>& labels);

inline constexpr double kProbClamp = 1e-7;

// -(1/N) sum_i w_{y_i} [y_i log p_i + (1 - y_i) log(1 - p_i)], p clamped to
// [1e-7, 1 - 1e-7].
template <typename T>
Tensor<T> weighted_bce(const Tensor<T>& probs, const std::vector<int>& labels, const ClassWeights& weights = {});
double weighted_bce(const std::vector<double>& probs, const std::vector<int>& labels,
                    const ClassWeights& weights = {});

template <typename T>
class Adam {
 public:
  Adam(ParameterList<T> params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // Applies one update from the accumulated gradients. Throws NumericalError
  // naming the parameter if any gradient is not finite.
  void step();
  void zero_grad();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t step_count() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  ParameterList<T> params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Reduce-on-plateau: after `patience` epochs without an improvement larger
// than min_delta the rate is multiplied by `factor` and the counter restarts.
struct PlateauScheduler {
  std::size_t patience = 5;
  double factor = 0.2;
  double min_delta = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;

  // Returns the learning rate for the next epoch.
  double step(double loss, double lr);
};

struct EarlyStopping {
  std::size_t patience = 15;
  double min_delta = 1e-4;
  double best = std::numeric_limits<double>::infinity();
  std::size_t wait = 0;
  bool last_improved = false;

  // True when training should stop.
  bool step(double loss);
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate used during the epoch
};

struct History {
  std::vector<EpochRecord> epochs;

  std::string to_csv() const;  // header: epoch,train_loss,val_loss,lr
  void save_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
  History history;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;  // 0 if no epoch ran
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mean unweighted BCE of the model on `windows`, eval mode.
template <typename T>
double evaluate_loss(const Model<T>& model, const std::vector<ObservationWindow>& windows, std::size_t batch_size);

template <typename T>
std::vector<double> predict_all(const Model<T>& model, const std::vector<ObservationWindow>& windows,
                                std::size_t batch_size = 64);

// Mini-batch Adam on weighted BCE with plateau LR reduction and early
// stopping on validation loss (training loss when `val` is empty). The
// weights of the best epoch are restored before returning.
template <typename T>
TrainResult train(Model<T>& model, const std::vector<ObservationWindow>& train_set,
                  const std::vector<ObservationWindow>& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// train() with fresh optimizer state, no class weights and plateau factor 0.1.
template <typename T>
TrainResult finetune(Model<T>& model, const std::vector<ObservationWindow>& train_set,
                     const std::vector<ObservationWindow>& val_set, TrainConfig cfg,
                     const EpochCallback& on_epoch = {});

struct EnsembleHead {
  std::array<double, 3> w{};
  double b = 0.0;

  double predict(const std::array<double, 3>& member_probs) const;
  StateDict state() const;
  static EnsembleHead from_state(const StateDict& state);  // throws LoadError
};

struct EnsembleResult {
  EnsembleHead head;
  TrainResult train;
};

// Fits sigma(w . p + b) on fixed member probabilities (rows of 3).
EnsembleResult train_ensemble_head(const std::vector<std::array<double, 3>>& train_probs,
                                   const std::vector<int>& train_labels,
                                   const std::vector<std::array<double, 3>>& val_probs,
                                   const std::vector<int>& val_labels, const TrainConfig& cfg,
                                   const EpochCallback& on_epoch = {});

}  // namespace pedintent
