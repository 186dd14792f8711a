#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "decan/types.hpp"

namespace decan::nn {

enum class Activation { ReLU, Identity };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

// Trainable tensor with its gradient accumulator. Layers that share weights
// hold the same Parameter, so gradients from every use site sum here.
struct Parameter {
  Matrix value;
  Matrix grad;
  // Incremented by every optimizer update; forward caches record it.
  std::uint64_t version{0};
  // Number of forward evaluations that touched this parameter.
  mutable std::atomic<std::uint64_t> reads{0};

  explicit Parameter(Matrix v) : value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
};

using ParamPtr = std::shared_ptr<Parameter>;

struct DenseLayer {
  ParamPtr weight;  // out x in
  ParamPtr bias;    // out x 1
  Activation activation{Activation::Identity};
  std::string shared_tag;

  int in_dim() const { return static_cast<int>(weight->value.cols()); }
  int out_dim() const { return static_cast<int>(weight->value.rows()); }

  // Glorot-uniform weights in +-sqrt(6 / (in + out)), zero bias.
  static DenseLayer make(int in, int out, Activation activation, std::mt19937_64& rng, std::string shared_tag = {});
};

struct LayerCache {
  Matrix input;
  Matrix pre;
  Matrix output;
  std::uint64_t weight_version{0};
  std::uint64_t bias_version{0};
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix input;

  const Matrix& output() const { return layers.empty() ? input : layers.back().output; }
};

// Rows are samples. Throws std::invalid_argument on a broken dimension chain.
ForwardCache forward(std::span<const DenseLayer> layers, const Matrix& input);

// Forward without caching.
Matrix infer(std::span<const DenseLayer> layers, const Matrix& input);

// Accumulates parameter gradients (+=) and returns the gradient with respect to
// the stack input. Throws std::logic_error if a parameter changed since the
// forward pass that produced `cache`.
Matrix backward(std::span<const DenseLayer> layers, const ForwardCache& cache, const Matrix& upstream);

Matrix softmax(const Matrix& logits);

struct LossAndGrad {
  double loss{0.0};
  Matrix grad;
};

// Mean negative log-likelihood over the batch; grad = (softmax - onehot) / batch.
LossAndGrad softmax_cross_entropy(const Matrix& logits, std::span<const int> targets);

// Unique parameters of a model in declaration order, deduplicated by storage.
class ParameterSet {
 public:
  void add(const std::string& name, const ParamPtr& p);
  void add_layer(const std::string& name, const DenseLayer& layer);

  std::size_t size() const { return params_.size(); }
  const ParamPtr& operator[](std::size_t i) const { return params_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t scalar_count() const;

  void zero_grad();
  double max_abs_grad() const;
  bool grads_finite() const;

 private:
  std::vector<ParamPtr> params_;
  std::vector<std::string> names_;
};

struct RmspropOptions {
  double learning_rate{1e-3};
  double rho{0.9};
  double epsilon{1e-8};
};

struct RmspropState {
  RmspropOptions options;
  std::vector<Matrix> mean_square;  // one per parameter, initialised to zero

  explicit RmspropState(const ParameterSet& params, RmspropOptions opts = {});
};

// v <- rho v + (1 - rho) g^2;  theta <- theta - lr g / (sqrt(v) + eps).
void rmsprop_update(Matrix& theta, const Matrix& grad, Matrix& mean_square, const RmspropOptions& opts);

// Applies rmsprop_update to every parameter and bumps its version.
void rmsprop_step(ParameterSet& params, RmspropState& state);

// Records the on/off pattern of every ReLU evaluated on this thread while alive.
class ActivationProbe {
 public:
  ActivationProbe();
  ~ActivationProbe();
  ActivationProbe(const ActivationProbe&) = delete;
  ActivationProbe& operator=(const ActivationProbe&) = delete;
  std::uint64_t digest() const { return digest_; }

 private:
  std::uint64_t digest_{0xcbf29ce484222325ULL};
  std::uint64_t* previous_;
};

struct GradCheckResult {
  double max_relative_error{0.0};  // over checked scalars
  std::size_t checked{0};
  std::size_t failures{0};
  std::size_t kinks{0};     // skipped: a ReLU switched within +-h
  std::size_t roundoff{0};  // over tolerance but within the difference's round-off
  std::string worst;        // "param[row,col]"
};

// Central differences with step h on every scalar of every parameter.
// `loss` evaluates the objective from the current values; `loss_and_backward`
// must zero and fill the gradients. Relative error is
// |analytic - numeric| / (|analytic| + 1e-8). A scalar whose +-h evaluations
// change any ReLU pattern is not differentiable over the step and is skipped.
// Errors over tolerance but within 8 ulp(loss) / (2h) are counted as round-off.
GradCheckResult gradient_check(ParameterSet& params, const std::function<double()>& loss,
                               const std::function<void()>& loss_and_backward, double h = 1e-5,
                               double tolerance = 1e-4);

// Framed checkpoint: "DECANCK1", JSON header {layers:[{name,rows,cols}], ...extra},
// float32 LE values in declaration order.
void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params, const nlohmann::json& extra);
// Loads values into an existing parameter set with matching names and shapes.
nlohmann::json read_checkpoint(const std::filesystem::path& path, ParameterSet& params);
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace decan::nn
