#include "pedintent/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "pedintent/errors.hpp"

namespace pedintent {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw ContractError("metrics: " + std::to_string(scores.size()) + " scores vs " + std::to_string(labels.size()) +
                        " labels");
  }
  if (scores.empty()) throw ContractError("metrics need at least one sample");
  for (int y : labels)
    if (y != 0 && y != 1) throw ContractError("labels must be 0 or 1");
}

}  // namespace

std::optional<double> auc_rank(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // sum of 1-based mid-ranks of the positives
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * double(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double u = rank_sum - double(n_pos) * double(n_pos + 1) / 2.0;
  return u / (double(n_pos) * double(n_neg));
}

std::optional<double> auc_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_inputs(scores, labels);
  double credit = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) credit += 1.0;
      else if (scores[i] == scores[j]) credit += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return credit / double(pairs);
}

MetricsReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  check_inputs(scores, labels);
  MetricsReport r;
  r.threshold = threshold;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++r.tp;
    else if (pred) ++r.fp;
    else if (labels[i]) ++r.fn;
    else ++r.tn;
  }
  r.accuracy = double(r.tp + r.tn) / double(r.total());
  r.precision = r.tp + r.fp ? double(r.tp) / double(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? double(r.tp) / double(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.auc = auc_rank(scores, labels);
  return r;
}

std::string MetricsReport::to_csv() const {
  char buf[256];
  char auc_text[32] = "nan";
  if (auc) std::snprintf(auc_text, sizeof auc_text, "%.6f", *auc);
  std::snprintf(buf, sizeof buf, "Acc,AUC,F1,Precision,Recall\n%.6f,%s,%.6f,%.6f,%.6f\n", accuracy, auc_text, f1,
                precision, recall);
  return buf;
}

void MetricsReport::save_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << to_csv();
}

}  // namespace pedintent
