#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "decan/baselines.hpp"
#include "decan/dsp.hpp"
#include "decan/features.hpp"
#include "decan/folds.hpp"
#include "decan/metrics.hpp"
#include "decan/model.hpp"
#include "decan/pairing.hpp"

namespace decan::eval {

// Raw trial -> preprocessed -> DE tensor -> optional LDS smoothing.
struct FeaturePipeline {
  dsp::PreprocessOptions dsp;
  features::ExtractOptions extract;
  std::vector<features::BandSpec> bands{features::canonical_bands().begin(), features::canonical_bands().end()};
  bool smooth{true};
  features::LdsParams lds;
};

features::FeatureTensor featurize_trial(const RawTrial& trial, const FeaturePipeline& pipeline);
std::vector<features::FeatureTensor> featurize_trials(const std::vector<RawTrial>& trials,
                                                      const FeaturePipeline& pipeline);

struct FeatureSet {
  std::vector<features::FeatureTensor> wet;
  std::vector<features::FeatureTensor> dry;
  // Wet pool from another dataset, used by the inter-dataset pairing.
  std::vector<features::FeatureTensor> external_wet;
};

enum class Method { LR, LinearSVM, DNN, DECAN, DECANNoContrastive };

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

struct ExperimentSpec {
  CvScheme scheme{CvScheme::LOBO};
  Method method{Method::DECAN};
  // Device whose recordings are classified by the baselines (DECAN always
  // tests on dry).
  DeviceKind device{DeviceKind::Dry};
  std::vector<features::Band> band_mask{features::Band::Delta, features::Band::Theta, features::Band::Alpha,
                                        features::Band::Beta, features::Band::Gamma};
  PairingStrategy pairing{PairingStrategy::intra_subject()};
  model::DecanConfig decan;  // input dims are filled per run
  BaselineConfig baseline;
  int num_classes{5};
  std::uint64_t seed{0};
  bool export_latents{true};
};

nlohmann::json to_json(const ExperimentSpec& spec);

struct SegmentRef {
  TrialKey key;
  int segment{0};
};

struct FoldResult {
  int subject{0};
  int block{0};
  std::uint64_t seed{0};
  int train_rows{0};
  MetricsReport metrics;
  std::vector<SegmentRef> test_segments;
  std::vector<int> labels;
  std::vector<int> predictions;
  Matrix latents;  // test rows x latent width (empty when not exported)
  nlohmann::json info;
};

struct SubjectSummary {
  int subject{0};
  int folds{0};
  double accuracy{0.0};
  double precision{0.0};
  double recall{0.0};
  double f1{0.0};
  double auroc{0.0};
  double auprc{0.0};
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::vector<FoldResult> folds;  // sorted by (subject, block)
  std::vector<SubjectSummary> subjects;
  MeanStd accuracy, precision, recall, f1, auroc, auprc;  // across subjects
  std::vector<std::vector<long>> confusion;                // pooled over folds
};

// Mixes the base seed with the fold key.
std::uint64_t fold_seed(std::uint64_t base, int subject, int block);

ExperimentReport run_experiment(const FeatureSet& data, const ExperimentSpec& spec);

// Full JSON report; latents are included when `with_latents`.
nlohmann::json to_json(const ExperimentReport& report, bool with_latents = false);

std::string subject_accuracy_csv(const ExperimentReport& report);
std::string confusion_csv(const ExperimentReport& report);
std::string latents_csv(const ExperimentReport& report);

struct AblationReport {
  ExperimentReport with_contrastive;
  ExperimentReport without_contrastive;
  nlohmann::json config_diff;  // keys whose values differ between the two runs
};

// Same spec and seeds, with and without the contrastive term.
AblationReport run_ablation(const FeatureSet& data, ExperimentSpec spec);

nlohmann::json to_json(const AblationReport& report);

struct BandResult {
  std::vector<features::Band> mask;
  ExperimentReport report;
};

// One run per single band plus the full mask.
std::vector<BandResult> run_band_sweep(const FeatureSet& data, const ExperimentSpec& spec);

std::string band_accuracy_csv(const std::vector<BandResult>& results);

// {key: [a, b]} for every leaf that differs between two JSON objects.
nlohmann::json json_diff(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace decan::eval
