#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "decan/network.hpp"
#include "decan/types.hpp"

namespace decan::eval {

// Per-column z-scoring fitted on training rows; constant columns keep scale 1.
struct Standardizer {
  Vector mean;
  Vector scale;

  static Standardizer fit(const Matrix& x);
  Matrix apply(const Matrix& x) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

enum class BaselineKind { LR, LinearSVM, DNN };

std::string_view to_string(BaselineKind kind);
BaselineKind baseline_from_string(std::string_view name);

// C candidates: 2^-10 .. 2^10 and 0.1, 0.6, ..., 19.6.
std::vector<double> svm_c_grid();

struct BaselineConfig {
  // Softmax regression.
  double lr_l2{1e-4};
  int lr_iterations{500};
  // Linear SVM (one-vs-rest hinge, subgradient descent with iterate averaging).
  std::vector<double> svm_c_grid{eval::svm_c_grid()};
  int svm_iterations{300};
  int svm_inner_folds{4};
  // DNN.
  DeviceKind dnn_device{DeviceKind::Dry};
  double dnn_learning_rate{1e-3};
  int dnn_epochs{15000};
  int dnn_batch_size{256};
  int dnn_patience{200};
  double dnn_min_improvement{1e-6};
  std::uint64_t seed{0};
};

nlohmann::json to_json(const BaselineConfig& c);

class Classifier {
 public:
  virtual ~Classifier() = default;
  // n x K probabilities (softmax of decision values for the SVM).
  virtual Matrix predict_proba(const Matrix& x) const = 0;
  std::vector<int> predict(const Matrix& x) const;
  // Penultimate representation for export; empty for linear models.
  virtual Matrix latents(const Matrix& x) const { return Matrix(x.rows(), 0); }
  // Diagnostics (chosen C, epochs run, ...).
  virtual nlohmann::json info() const { return nlohmann::json::object(); }
};

// Throws std::invalid_argument when fewer than two classes are present.
std::unique_ptr<Classifier> train_baseline(BaselineKind kind, const Matrix& features, std::span<const int> labels,
                                           int num_classes, const BaselineConfig& config);

// Hidden layer sizes of the per-device DNN baseline.
std::vector<int> dnn_hidden(DeviceKind device);

}  // namespace decan::eval
