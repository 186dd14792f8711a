#include "decan/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "decan/log.hpp"
#include "decan/model.hpp"

namespace decan::eval {

using nlohmann::json;

Standardizer Standardizer::fit(const Matrix& x) {
  if (x.rows() == 0) throw std::invalid_argument("standardizer: no rows");
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  s.mean = x.colwise().mean().transpose();
  s.scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.mean(j)).square().sum() / n;
    const double sd = std::sqrt(var);
    s.scale(j) = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (x.cols() != mean.size()) throw std::invalid_argument("standardizer: column count mismatch");
  Matrix out = x;
  out.rowwise() -= mean.transpose();
  out.array().rowwise() /= scale.transpose().array();
  return out;
}

json Standardizer::to_json() const {
  return {{"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())}};
}

Standardizer Standardizer::from_json(const json& j) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto s = j.at("scale").get<std::vector<double>>();
  if (m.size() != s.size()) throw std::invalid_argument("standardizer: mean/scale length mismatch");
  Standardizer out;
  out.mean = Eigen::Map<const Vector>(m.data(), static_cast<Eigen::Index>(m.size()));
  out.scale = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  return out;
}

std::string_view to_string(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::LR:
      return "lr";
    case BaselineKind::LinearSVM:
      return "svm";
    case BaselineKind::DNN:
      return "dnn";
  }
  return "?";
}

BaselineKind baseline_from_string(std::string_view name) {
  if (name == "lr" || name == "LR") return BaselineKind::LR;
  if (name == "svm" || name == "LinearSVM" || name == "linear_svm") return BaselineKind::LinearSVM;
  if (name == "dnn" || name == "DNN") return BaselineKind::DNN;
  throw std::invalid_argument("unknown baseline: " + std::string(name));
}

std::vector<double> svm_c_grid() {
  std::set<double> grid;
  for (int e = -10; e <= 10; ++e) grid.insert(std::ldexp(1.0, e));
  for (int i = 0; i < 40; ++i) grid.insert(0.1 + 0.5 * i);
  return {grid.begin(), grid.end()};
}

json to_json(const BaselineConfig& c) {
  return {
      {"lr_l2", c.lr_l2},
      {"lr_iterations", c.lr_iterations},
      {"svm_c_grid", c.svm_c_grid},
      {"svm_iterations", c.svm_iterations},
      {"svm_inner_folds", c.svm_inner_folds},
      {"dnn_device", std::string(decan::to_string(c.dnn_device))},
      {"dnn_learning_rate", c.dnn_learning_rate},
      {"dnn_epochs", c.dnn_epochs},
      {"dnn_batch_size", c.dnn_batch_size},
      {"dnn_patience", c.dnn_patience},
      {"dnn_min_improvement", c.dnn_min_improvement},
      {"seed", c.seed},
  };
}

std::vector<int> Classifier::predict(const Matrix& x) const { return model::argmax_rows(predict_proba(x)); }

std::vector<int> dnn_hidden(DeviceKind device) {
  if (device == DeviceKind::Wet) return {128, 64, 32};
  return {64, 32};
}

namespace {

void check_training_data(const Matrix& x, std::span<const int> labels, int num_classes) {
  if (x.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("train_baseline: feature rows and label count differ");
  }
  if (num_classes < 2) throw std::invalid_argument("train_baseline: num_classes must be >= 2");
  std::set<int> present;
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("train_baseline: label out of range");
    present.insert(y);
  }
  if (present.size() < 2) throw std::invalid_argument("train_baseline: training data has a single class");
}

// Softmax regression: W is d x K, b is K.
class SoftmaxRegression final : public Classifier {
 public:
  SoftmaxRegression(Standardizer s, Matrix w, Vector b) : std_(std::move(s)), w_(std::move(w)), b_(std::move(b)) {}

  Matrix predict_proba(const Matrix& x) const override {
    Matrix logits = std_.apply(x) * w_;
    logits.rowwise() += b_.transpose();
    return nn::softmax(logits);
  }

 private:
  Standardizer std_;
  Matrix w_;
  Vector b_;
};

// Largest eigenvalue of A^T A / n for A = [x 1], by power iteration.
double gram_spectral_norm(const Matrix& x) {
  const auto n = static_cast<double>(x.rows());
  Vector v = Vector::Ones(x.cols() + 1).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    Vector av = x * v.head(x.cols());
    av.array() += v(x.cols());
    Vector next(x.cols() + 1);
    next.head(x.cols()) = x.transpose() * av / n;
    next(x.cols()) = av.sum() / n;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    const double prev = lambda;
    lambda = norm;
    v = next / norm;
    if (std::abs(lambda - prev) <= 1e-9 * lambda) break;
  }
  return lambda;
}

std::unique_ptr<Classifier> train_lr(const Matrix& features, std::span<const int> labels, int k,
                                     const BaselineConfig& cfg) {
  Standardizer s = Standardizer::fit(features);
  const Matrix x = s.apply(features);
  const auto n = x.rows();
  Matrix onehot = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  // Softmax cross-entropy has Hessian bounded by 1/2 * A^T A / n.
  const double step = 1.0 / (0.5 * gram_spectral_norm(x) + cfg.lr_l2);
  Matrix w = Matrix::Zero(x.cols(), k);
  Vector b = Vector::Zero(k);
  for (int it = 0; it < cfg.lr_iterations; ++it) {
    Matrix logits = x * w;
    logits.rowwise() += b.transpose();
    const Matrix g = (nn::softmax(logits) - onehot) / static_cast<double>(n);
    w -= step * (x.transpose() * g + cfg.lr_l2 * w);
    b -= step * g.colwise().sum().transpose();
  }
  return std::make_unique<SoftmaxRegression>(std::move(s), std::move(w), std::move(b));
}

struct OvrHinge {
  Matrix w;  // d x K
  Vector b;  // K
};

// Minimises lambda/2 |w|^2 + mean hinge per class, lambda = 1 / (C n), by
// subgradient descent with step 1 / (lambda t + 1) and averaging of the last
// half of the iterates.
OvrHinge fit_hinge(const Matrix& x, std::span<const int> labels, int k, double c, int iterations) {
  const auto n = x.rows();
  const double nd = static_cast<double>(n);
  const double lambda = 1.0 / (c * nd);
  Matrix y = -Matrix::Ones(n, k);
  for (Eigen::Index i = 0; i < n; ++i) y(i, labels[static_cast<std::size_t>(i)]) = 1.0;

  Matrix w = Matrix::Zero(x.cols(), k);
  Vector b = Vector::Zero(k);
  Matrix w_avg = Matrix::Zero(x.cols(), k);
  Vector b_avg = Vector::Zero(k);
  int averaged = 0;
  const int start_avg = iterations / 2;
  for (int t = 1; t <= iterations; ++t) {
    Matrix margin = x * w;
    margin.rowwise() += b.transpose();
    // Coefficient -y_i / n where the hinge is active.
    const Matrix active = ((y.array() * margin.array()) < 1.0).cast<double>();
    const Matrix coef = -(active.array() * y.array()).matrix() / nd;
    const double eta = 1.0 / (lambda * t + 1.0);
    w -= eta * (x.transpose() * coef + lambda * w);
    b -= eta * coef.colwise().sum().transpose();
    if (t > start_avg) {
      w_avg += w;
      b_avg += b;
      ++averaged;
    }
  }
  return {w_avg / averaged, b_avg / averaged};
}

Matrix hinge_margins(const OvrHinge& m, const Matrix& x) {
  Matrix margin = x * m.w;
  margin.rowwise() += m.b.transpose();
  return margin;
}

class LinearSvm final : public Classifier {
 public:
  LinearSvm(Standardizer s, OvrHinge m, double c, json cv)
      : std_(std::move(s)), model_(std::move(m)), c_(c), cv_(std::move(cv)) {}

  Matrix predict_proba(const Matrix& x) const override { return nn::softmax(hinge_margins(model_, std_.apply(x))); }

  json info() const override { return {{"C", c_}, {"cv_accuracy", cv_}}; }

 private:
  Standardizer std_;
  OvrHinge model_;
  double c_;
  json cv_;
};

Matrix take_rows(const Matrix& x, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::unique_ptr<Classifier> train_svm(const Matrix& features, std::span<const int> labels, int k,
                                      const BaselineConfig& cfg) {
  if (cfg.svm_c_grid.empty()) throw std::invalid_argument("train_baseline: empty SVM C grid");
  Standardizer s = Standardizer::fit(features);
  const Matrix x = s.apply(features);
  const auto n = x.rows();

  // Stratified inner folds: samples of each class dealt round-robin after a seeded shuffle.
  const int folds = std::clamp(cfg.svm_inner_folds, 2, static_cast<int>(n));
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  {
    std::mt19937_64 rng(cfg.seed ^ 0x73766dull);
    std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < n; ++i) by_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(i);
    int next = 0;
    for (auto& rows : by_class) {
      std::shuffle(rows.begin(), rows.end(), rng);
      for (auto r : rows) fold_of[static_cast<std::size_t>(r)] = next++ % folds;
    }
  }

  double best_c = cfg.svm_c_grid.front();
  double best_acc = -1.0;
  json cv = json::array();
  for (double c : cfg.svm_c_grid) {
    long correct = 0;
    long total = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, te;
      std::vector<int> ytr;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (fold_of[static_cast<std::size_t>(i)] == f) {
          te.push_back(i);
        } else {
          tr.push_back(i);
          ytr.push_back(labels[static_cast<std::size_t>(i)]);
        }
      }
      if (te.empty() || tr.empty()) continue;
      const OvrHinge m = fit_hinge(take_rows(x, tr), ytr, k, c, cfg.svm_iterations);
      const auto pred = model::argmax_rows(hinge_margins(m, take_rows(x, te)));
      for (std::size_t i = 0; i < te.size(); ++i) {
        correct += pred[i] == labels[static_cast<std::size_t>(te[i])] ? 1 : 0;
        ++total;
      }
    }
    const double acc = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    cv.push_back({c, acc});
    if (acc > best_acc) {
      best_acc = acc;
      best_c = c;
    }
  }
  log::info("svm: selected C = " + std::to_string(best_c) + " (inner cv accuracy " + std::to_string(best_acc) + ")");
  OvrHinge m = fit_hinge(x, labels, k, best_c, cfg.svm_iterations);
  return std::make_unique<LinearSvm>(std::move(s), std::move(m), best_c, std::move(cv));
}

class Mlp final : public Classifier {
 public:
  Mlp(Standardizer s, std::vector<nn::DenseLayer> layers, int epochs_run)
      : std_(std::move(s)), layers_(std::move(layers)), epochs_run_(epochs_run) {}

  Matrix predict_proba(const Matrix& x) const override { return nn::softmax(nn::infer(layers_, std_.apply(x))); }

  Matrix latents(const Matrix& x) const override {
    return nn::infer(std::span<const nn::DenseLayer>(layers_.data(), layers_.size() - 1), std_.apply(x));
  }

  json info() const override { return {{"epochs_run", epochs_run_}}; }

 private:
  Standardizer std_;
  std::vector<nn::DenseLayer> layers_;
  int epochs_run_;
};

std::unique_ptr<Classifier> train_dnn(const Matrix& features, std::span<const int> labels, int k,
                                      const BaselineConfig& cfg) {
  Standardizer s = Standardizer::fit(features);
  const Matrix x = s.apply(features);
  const auto n = x.rows();

  std::mt19937_64 rng(cfg.seed);
  std::vector<nn::DenseLayer> layers;
  int width = static_cast<int>(x.cols());
  for (int h : dnn_hidden(cfg.dnn_device)) {
    layers.push_back(nn::DenseLayer::make(width, h, nn::Activation::ReLU, rng));
    width = h;
  }
  layers.push_back(nn::DenseLayer::make(width, k, nn::Activation::Identity, rng));
  nn::ParameterSet params;
  for (std::size_t i = 0; i < layers.size(); ++i) params.add_layer("layer." + std::to_string(i), layers[i]);
  nn::RmspropState opt(params, nn::RmspropOptions{cfg.dnn_learning_rate, 0.9, 1e-8});

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x7261696eull);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.dnn_batch_size));
  const std::size_t chunks = (order.size() + batch - 1) / batch;

  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int epochs_run = 0;
  for (int epoch = 0; epoch < cfg.dnn_epochs; ++epoch) {
    if (chunks > 1) std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      const std::size_t lo = c * order.size() / chunks;
      const std::size_t hi = (c + 1) * order.size() / chunks;
      const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                           order.begin() + static_cast<std::ptrdiff_t>(hi));
      std::vector<int> y;
      for (auto r : rows) y.push_back(labels[static_cast<std::size_t>(r)]);
      params.zero_grad();
      const auto cache = nn::forward(layers, take_rows(x, rows));
      const auto ce = nn::softmax_cross_entropy(cache.output(), y);
      if (!std::isfinite(ce.loss)) throw model::TrainingDiverged(epoch, "L_CE", params.max_abs_grad());
      nn::backward(layers, cache, ce.grad);
      if (!params.grads_finite()) throw model::TrainingDiverged(epoch, "gradient", params.max_abs_grad());
      nn::rmsprop_step(params, opt);
      sum += ce.loss * static_cast<double>(rows.size());
    }
    epochs_run = epoch + 1;
    const double loss = sum / static_cast<double>(n);
    if (loss < best - cfg.dnn_min_improvement) {
      best = loss;
      best_epoch = epoch;
    } else if (epoch - best_epoch >= cfg.dnn_patience) {
      break;
    }
  }
  return std::make_unique<Mlp>(std::move(s), std::move(layers), epochs_run);
}

}  // namespace

std::unique_ptr<Classifier> train_baseline(BaselineKind kind, const Matrix& features, std::span<const int> labels,
                                           int num_classes, const BaselineConfig& config) {
  check_training_data(features, labels, num_classes);
  switch (kind) {
    case BaselineKind::LR:
      return train_lr(features, labels, num_classes, config);
    case BaselineKind::LinearSVM:
      return train_svm(features, labels, num_classes, config);
    case BaselineKind::DNN:
      return train_dnn(features, labels, num_classes, config);
  }
  throw std::invalid_argument("train_baseline: unknown kind");
}

}  // namespace decan::eval
