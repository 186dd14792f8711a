#pragma once

#include <cstdint>
#include <vector>

#include "decan/types.hpp"

namespace decan {

// Paired wet/dry recordings driven by shared latent sources. Every trial draws
// band-limited sources whose per-band power depends on the emotion; the wet and
// dry streams are different linear mixes of the same sources sampled on their
// own clocks, plus white noise of device-specific level.
struct SyntheticConfig {
  int n_subjects{8};
  int n_blocks{5};
  int trials_per_block{5};
  double trial_seconds{40.0};
  int latent_dim{6};
  int wet_channels{16};
  int dry_channels{8};
  double wet_noise_sigma{0.5};
  double dry_noise_sigma{4.0};
  // Std of the log-amplitude wander of the dry noise (contact instability);
  // 0 gives stationary white noise.
  double dry_noise_drift{0.0};
  double wet_rate_hz{1000.0};
  double dry_rate_hz{300.0};
  // Scale of the class-specific log band gains.
  double class_contrast{0.35};
  // Std of the per-trial log band-power jitter.
  double trial_jitter{0.3};
  // Std of the slow within-trial log band-power wander of each source, shared
  // by both devices; 0 keeps sources stationary within a trial.
  double source_dynamics{0.0};
  // Std of the per-subject log band-power offset.
  double subject_jitter{0.3};
  int components_per_band{8};
  std::uint64_t seed{7};
  int first_subject_id{1};
  // Keep sources and mixing matrices in the result (memory heavy).
  bool retain_sources{false};
};

// Throws std::invalid_argument naming every violated constraint.
void validate(const SyntheticConfig& config);

struct SyntheticTrialSources {
  TrialKey key;        // wet key of the pair
  Matrix wet_sources;  // latent_dim x wet samples
  Matrix dry_sources;  // latent_dim x dry samples
  Matrix log_power;    // latent_dim x 5 bands, the drawn per-trial log band powers
};

struct SyntheticDataset {
  std::vector<RawTrial> wet;
  std::vector<RawTrial> dry;
  // class x (latent_dim * 5): log band gains before scaling by class_contrast,
  // laid out source-major, band-minor.
  Matrix class_profile;
  std::vector<double> base_band_power;
  // Filled when retain_sources is set.
  std::vector<Matrix> wet_mixing;  // per subject, wet_channels x latent_dim
  std::vector<Matrix> dry_mixing;  // per subject, dry_channels x latent_dim
  std::vector<SyntheticTrialSources> sources;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& config);

// The (class, source, band) log-gain table used by the generator for a seed.
Matrix synthetic_class_profile(const SyntheticConfig& config);

}  // namespace decan
