#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "decan/experiment.hpp"
#include "decan/synthetic.hpp"

namespace decan::cli {

// Parses the TOML subset used for run configs: [section] / [a.b] headers,
// bare or dotted keys, strings, integers, floats, booleans, arrays (may span
// lines) and inline tables. Throws std::invalid_argument with a line number.
nlohmann::json parse_toml(std::string_view text);

// A single TOML value ("0.01", "[1, 2]", "\"x\"", "true").
nlohmann::json parse_toml_value(std::string_view text);

// Files ending in .json are parsed as JSON, everything else as TOML.
nlohmann::json load_config_file(const std::filesystem::path& path);

// The full default tree. Every accepted key appears here.
// Training budget of the default run config, shared by DECAN and the DNN baseline.
inline constexpr int kDeskEpochs = 60;
inline constexpr int kDeskBatchSize = 32;

nlohmann::json default_config();

struct FeatureBlock {
  std::vector<features::Band> bands;
  double segment_seconds{5.0};
  int filter_order{4};
  bool smooth{true};
  features::LdsParams lds;
};

struct EvalBlock {
  eval::CvScheme scheme{eval::CvScheme::LOBO};
  std::vector<eval::Method> methods;
  DeviceKind device{DeviceKind::Dry};
  std::vector<std::vector<features::Band>> band_masks;
  PairingStrategy pairing;
  int num_classes{5};
  bool ablation{false};
  bool band_sweep{false};
  bool export_latents{true};
  eval::BaselineConfig baseline;
};

struct RunConfig {
  std::string out_dir;
  std::uint64_t seed{0};
  std::string dataset_manifest;   // empty: use the synth output
  std::string external_manifest;  // wet pool for the inter-dataset pairing
  SyntheticConfig synthetic;
  dsp::PreprocessOptions dsp;
  FeatureBlock features;
  model::DecanConfig model;
  EvalBlock eval;
  std::vector<int> holdout_subjects;  // excluded by `train`, scored by `eval`
  std::vector<std::string> report_inputs;

  nlohmann::json resolved;  // defaults merged with the user tree
  std::string hash;         // FNV-1a of the canonical resolved tree

  eval::FeaturePipeline pipeline() const;
  eval::ExperimentSpec experiment(eval::Method method, const std::vector<features::Band>& mask) const;
};

// Applies "block.key=value" to a config tree (creating objects as needed).
void apply_override(nlohmann::json& tree, std::string_view assignment);

// Merges `user` over the defaults, rejects unknown keys and mistyped values
// (listing every offender in one error), builds and validates every block.
RunConfig resolve_config(const nlohmann::json& user);

std::string config_hash(const nlohmann::json& resolved);

}  // namespace decan::cli
