#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pedintent {

struct MetricsReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  std::optional<double> auc;  // undefined when only one class is present
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.5;

  std::size_t total() const { return tp + fp + tn + fn; }
  // "Acc,AUC,F1,Precision,Recall" header plus one row; undefined AUC is "nan".
  std::string to_csv() const;
  void save_csv(const std::filesystem::path& path) const;
};

// Predictions are score >= threshold. Precision, recall and F1 fall back to 0
// on a zero denominator. Throws ContractError on length mismatch or N = 0.
MetricsReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);

// Mann-Whitney AUC from mid-ranks; ties count one half. nullopt if a class is absent.
std::optional<double> auc_rank(const std::vector<double>& scores, const std::vector<int>& labels);

// Exhaustive pairwise count over every (positive, negative) pair.
std::optional<double> auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace pedintent
