#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "decan/network.hpp"
#include "decan/pairing.hpp"
#include "decan/types.hpp"

namespace decan::model {

enum class ContrastiveMode {
  // Denominator excludes the positive (j != i), as the indicator is printed.
  StrictPaper,
  // Denominator sums over every j including the positive; loss >= 0.
  InclusivePositive,
};

std::string_view to_string(ContrastiveMode mode);
ContrastiveMode contrastive_mode_from_string(std::string_view name);

struct DecanConfig {
  int wet_input_dim{0};
  int dry_input_dim{0};
  std::vector<int> hidden{128, 64, 32};
  int projector_hidden{128};
  int projector_out{64};
  int num_classes{5};
  double temperature{0.5};
  ContrastiveMode contrastive_mode{ContrastiveMode::InclusivePositive};
  bool symmetric_loss{false};
  // Ablation switch: false trains on L_W + L_D only.
  bool use_contrastive{true};
  double learning_rate{1e-3};
  int epochs{15000};
  int batch_size{256};
  // Stop when the epoch loss has not improved by min_improvement for this
  // many epochs.
  int patience{200};
  double min_improvement{1e-6};
  std::uint64_t seed{0};

  int latent_dim() const { return hidden.back(); }
  // Throws std::invalid_argument listing every violation.
  void validate() const;
};

nlohmann::json to_json(const DecanConfig& config);
DecanConfig decan_config_from_json(const nlohmann::json& j);

// Learning-rate search space: {1,3,5,7,9} x 1e-4, 1e-3, 1e-2.
std::vector<double> learning_rate_grid();
// Projector hidden sizes searched.
std::vector<int> projector_hidden_grid();

// Wet path: wet_stack -> trunk. Dry path: dry_adapter -> trunk. The trunk,
// projector and classifier are single parameter stores used by both paths.
class DecanModel {
 public:
  explicit DecanModel(const DecanConfig& config);
  // Layers hold shared parameter storage, so copies would alias; move only.
  DecanModel(const DecanModel&) = delete;
  DecanModel& operator=(const DecanModel&) = delete;
  DecanModel(DecanModel&&) = default;
  DecanModel& operator=(DecanModel&&) = default;

  const DecanConfig& config() const { return config_; }

  std::vector<nn::DenseLayer> encoder(DeviceKind device) const;
  const std::vector<nn::DenseLayer>& projector() const { return projector_; }
  const std::vector<nn::DenseLayer>& classifier() const { return classifier_; }
  const nn::DenseLayer& wet_stack() const { return wet_stack_; }
  const nn::DenseLayer& dry_adapter() const { return dry_adapter_; }
  const std::vector<nn::DenseLayer>& trunk() const { return trunk_; }

  nn::ParameterSet& parameters() { return params_; }
  const nn::ParameterSet& parameters() const { return params_; }

  // Total forward reads of the wet-only parameters, for inference audits.
  std::uint64_t wet_stack_reads() const;

 private:
  DecanConfig config_;
  nn::DenseLayer wet_stack_;
  nn::DenseLayer dry_adapter_;
  std::vector<nn::DenseLayer> trunk_;
  std::vector<nn::DenseLayer> projector_;
  std::vector<nn::DenseLayer> classifier_;
  nn::ParameterSet params_;
};

Matrix encode(const DecanModel& model, const Matrix& features, DeviceKind device);
Matrix project(const DecanModel& model, const Matrix& latent);

// a.b / (|a||b|); 0 with a warning when either vector has zero norm.
double cosine_similarity(const Vector& a, const Vector& b);

struct ContrastiveResult {
  double loss{0.0};
  Matrix grad_wet;  // dL/dP_w
  Matrix grad_dry;  // dL/dP_d
  Matrix similarity;  // T x T, sim(p_i^w, p_j^d)
};

// Sum over anchors i of -log(exp(s_ii / tau) / D_i), anchored wet -> dry; the
// symmetric variant adds the dry -> wet direction. Requires T >= 2.
ContrastiveResult contrastive_loss(const Matrix& wet_proj, const Matrix& dry_proj, double temperature,
                                   ContrastiveMode mode, bool symmetric = false, bool want_grad = true);

struct LossComponents {
  double total{0.0};
  double wet{0.0};
  double dry{0.0};
  double contrastive{0.0};
};

// L = L_W + L_D + L_CL (L_CL omitted when use_contrastive is false). With
// accumulate_grad, parameter gradients are added to (callers zero them).
LossComponents total_loss(DecanModel& model, const PairedBatch& batch, bool accumulate_grad);

struct EpochRecord {
  int epoch{0};
  LossComponents loss;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int epochs_run{0};
  bool stopped_early{false};
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, std::string component, double max_abs_grad);
  int epoch;
  std::string component;
  double max_abs_grad;
};

// RMSprop on the joint loss. Each epoch visits every batch (chunked to
// batch_size rows, row order reshuffled per epoch from the seed).
TrainResult train(DecanModel& model, std::span<const PairedBatch> batches,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

struct DryPrediction {
  std::vector<int> labels;
  Matrix probabilities;
  Matrix latents;
};

// Dry path only: adapter -> trunk -> classifier. Ties resolve to the lowest class.
DryPrediction predict_dry(const DecanModel& model, const Matrix& dry_features);

std::vector<int> argmax_rows(const Matrix& scores);

void save_model(const std::filesystem::path& path, const DecanModel& model, const nlohmann::json& extra = {});
DecanModel load_model(const std::filesystem::path& path);

}  // namespace decan::model
