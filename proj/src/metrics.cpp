#include "decan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "decan/log.hpp"

namespace decan::eval {

double binary_auroc(std::span<const double> scores, std::span<const int> is_positive) {
  if (scores.size() != is_positive.size()) throw std::invalid_argument("auroc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average 1-based ranks over tie groups.
  double pos_rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (is_positive[order[k]]) {
        pos_rank_sum += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("auroc: need both positives and negatives");
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double binary_auprc(std::span<const double> scores, std::span<const int> is_positive) {
  if (scores.size() != is_positive.size()) throw std::invalid_argument("auprc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total_pos = 0.0;
  for (std::size_t i = 0; i < n; ++i) total_pos += is_positive[i] ? 1.0 : 0.0;
  if (total_pos == 0.0) throw std::invalid_argument("auprc: no positives");

  double tp = 0.0;
  double fp = 0.0;
  double prev_recall = 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (is_positive[order[j]]) {
        tp += 1.0;
      } else {
        fp += 1.0;
      }
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

MetricsReport compute_metrics(std::span<const int> predictions, const Matrix& scores, std::span<const int> labels,
                              int num_classes) {
  const std::size_t n = labels.size();
  if (n == 0) throw std::invalid_argument("compute_metrics: empty input");
  if (predictions.size() != n || static_cast<std::size_t>(scores.rows()) != n) {
    throw std::invalid_argument("compute_metrics: length mismatch between predictions, scores and labels");
  }
  if (scores.cols() != num_classes) throw std::invalid_argument("compute_metrics: score width != num_classes");
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    if (std::abs(scores.row(i).sum() - 1.0) > 1e-6) {
      throw std::invalid_argument("compute_metrics: score rows must sum to 1");
    }
  }

  MetricsReport m;
  m.n = static_cast<int>(n);
  m.num_classes = num_classes;
  m.confusion.assign(static_cast<std::size_t>(num_classes), std::vector<long>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < n; ++i) {
    const int t = labels[i];
    const int p = predictions[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw std::invalid_argument("compute_metrics: class index out of range");
    }
    ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  long trace = 0;
  for (int c = 0; c < num_classes; ++c) trace += m.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  m.accuracy = static_cast<double>(trace) / static_cast<double>(n);

  double sp = 0.0, sr = 0.0, sf = 0.0, sroc = 0.0, sprc = 0.0;
  int roc_classes = 0;
  std::vector<double> column(n);
  std::vector<int> positive(n);
  for (int c = 0; c < num_classes; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    long support = 0;
    long predicted = 0;
    for (int k = 0; k < num_classes; ++k) {
      support += m.confusion[cu][static_cast<std::size_t>(k)];
      predicted += m.confusion[static_cast<std::size_t>(k)][cu];
    }
    if (support == 0) {
      log::warn("compute_metrics: class " + std::to_string(c) + " absent from labels, excluded from macro averages");
      continue;
    }
    m.classes_evaluated.push_back(c);
    const double tp = static_cast<double>(m.confusion[cu][cu]);
    const double precision = predicted > 0 ? tp / static_cast<double>(predicted) : 0.0;
    const double recall = tp / static_cast<double>(support);
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    sp += precision;
    sr += recall;
    sf += f1;

    for (std::size_t i = 0; i < n; ++i) {
      column[i] = scores(static_cast<Eigen::Index>(i), c);
      positive[i] = labels[i] == c ? 1 : 0;
    }
    sprc += binary_auprc(column, positive);
    if (support < static_cast<long>(n)) {
      sroc += binary_auroc(column, positive);
      ++roc_classes;
    } else {
      log::warn("compute_metrics: class " + std::to_string(c) + " has no negatives, AUROC undefined");
    }
  }
  const auto k = static_cast<double>(m.classes_evaluated.size());
  m.precision = sp / k;
  m.recall = sr / k;
  m.f1 = sf / k;
  m.auprc = sprc / k;
  m.auroc = roc_classes > 0 ? sroc / roc_classes : 0.0;
  return m;
}

nlohmann::json to_json(const MetricsReport& m) {
  return {
      {"n", m.n},
      {"accuracy", m.accuracy},
      {"precision", m.precision},
      {"recall", m.recall},
      {"f1", m.f1},
      {"auroc", m.auroc},
      {"auprc", m.auprc},
      {"classes_evaluated", m.classes_evaluated},
      {"confusion", m.confusion},
  };
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  const auto n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / (n - 1.0));
  }
  return r;
}

}  // namespace decan::eval
