#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "decan/types.hpp"

namespace decan::eval {

struct MetricsReport {
  int n{0};
  int num_classes{0};
  double accuracy{0.0};
  // Macro averages over the classes present in `labels`.
  double precision{0.0};
  double recall{0.0};
  double f1{0.0};
  double auroc{0.0};
  double auprc{0.0};
  std::vector<int> classes_evaluated;
  // confusion[true][predicted]
  std::vector<std::vector<long>> confusion;
};

// Area under the ROC curve via the rank statistic; tied scores count 1/2.
double binary_auroc(std::span<const double> scores, std::span<const int> is_positive);

// Step-wise area under the precision-recall curve: sum over distinct score
// thresholds (descending) of (recall_k - recall_{k-1}) * precision_k.
double binary_auprc(std::span<const double> scores, std::span<const int> is_positive);

// Scores are n x K class probabilities (rows must sum to 1 within 1e-6).
// Classes absent from `labels` are left out of the macro averages.
MetricsReport compute_metrics(std::span<const int> predictions, const Matrix& scores, std::span<const int> labels,
                              int num_classes);

nlohmann::json to_json(const MetricsReport& m);

struct MeanStd {
  double mean{0.0};
  double std{0.0};  // sample standard deviation (n - 1); 0 for a single value
};

MeanStd mean_std(std::span<const double> values);

}  // namespace decan::eval
