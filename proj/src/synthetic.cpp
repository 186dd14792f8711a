#include "decan/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <stdexcept>

#include "decan/features.hpp"

namespace decan {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return std::mt19937_64(splitmix(splitmix(splitmix(seed ^ 0x5eedull) + a) + b) + c);
}

// Rough 1/f shape of resting EEG band power.
const std::vector<double> kBasePower = {4.0, 2.0, 1.5, 0.6, 0.25};

constexpr double kDriftKnotSeconds = 2.0;

struct Oscillator {
  double freq;
  double phase;
  double amp;
};

// Evaluates the sum of oscillators at t = i / rate for i in [0, n), into `row`.
void render(const std::vector<Oscillator>& osc, double rate, Eigen::Index n, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  row.setZero();
  constexpr Eigen::Index kResync = 1024;
  for (const auto& o : osc) {
    const double w = 2.0 * std::numbers::pi * o.freq / rate;
    const std::complex<double> step = std::polar(1.0, w);
    for (Eigen::Index start = 0; start < n; start += kResync) {
      std::complex<double> z = std::polar(o.amp, w * static_cast<double>(start) + o.phase);
      const Eigen::Index stop = std::min(n, start + kResync);
      for (Eigen::Index i = start; i < stop; ++i) {
        row(i) += z.imag();
        z *= step;
      }
    }
  }
}

// Piecewise-linear curve through knots spaced kDriftKnotSeconds apart, at t = i / rate.
double knot_curve(const std::vector<double>& knots, double rate, Eigen::Index i) {
  const double pos = static_cast<double>(i) / (kDriftKnotSeconds * rate);
  const auto k0 = std::min(static_cast<std::size_t>(pos), knots.size() - 2);
  const double frac = pos - static_cast<double>(k0);
  return (1.0 - frac) * knots[k0] + frac * knots[k0 + 1];
}

// Renders each band's oscillators scaled by its amplitude envelope exp(g(t) / 2).
void render_modulated(const std::vector<std::vector<Oscillator>>& bands, const std::vector<std::vector<double>>& knots,
                      double rate, Eigen::Index n, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  row.setZero();
  Eigen::RowVectorXd tmp(n);
  for (std::size_t k = 0; k < bands.size(); ++k) {
    Eigen::Map<Eigen::RowVectorXd> view(tmp.data(), n);
    render(bands[k], rate, n, view);
    for (Eigen::Index i = 0; i < n; ++i) row(i) += tmp(i) * std::exp(0.5 * knot_curve(knots[k], rate, i));
  }
}

}  // namespace

void validate(const SyntheticConfig& c) {
  std::vector<std::string> errors;
  if (c.n_subjects < 1) errors.push_back("n_subjects must be >= 1");
  if (c.n_blocks < 1) errors.push_back("n_blocks must be >= 1");
  if (c.trials_per_block < 1) errors.push_back("trials_per_block must be >= 1");
  if (!(c.trial_seconds >= 1.0)) errors.push_back("trial_seconds must be >= 1");
  if (c.latent_dim < 1) errors.push_back("latent_dim must be >= 1");
  if (c.dry_channels < 1) errors.push_back("dry_channels must be >= 1");
  if (!(c.dry_channels < c.wet_channels)) errors.push_back("dry_channels must be < wet_channels");
  // wet noise 0 is allowed: it yields exact source mixtures for oracle checks.
  if (!(c.wet_noise_sigma >= 0.0)) errors.push_back("wet_noise_sigma must be >= 0");
  if (!(c.dry_noise_sigma > c.wet_noise_sigma)) errors.push_back("dry_noise_sigma must exceed wet_noise_sigma");
  if (!(c.wet_rate_hz > 100.0) || !(c.dry_rate_hz > 100.0)) errors.push_back("sample rates must exceed 100 Hz");
  if (c.components_per_band < 1) errors.push_back("components_per_band must be >= 1");
  if (!(c.class_contrast >= 0.0)) errors.push_back("class_contrast must be >= 0");
  if (!(c.dry_noise_drift >= 0.0)) errors.push_back("dry_noise_drift must be >= 0");
  if (!(c.source_dynamics >= 0.0)) errors.push_back("source_dynamics must be >= 0");
  if (!(c.trial_jitter >= 0.0) || !(c.subject_jitter >= 0.0)) errors.push_back("jitter must be >= 0");
  if (!errors.empty()) {
    std::string msg = "invalid synthetic config:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw std::invalid_argument(msg);
  }
}

Matrix synthetic_class_profile(const SyntheticConfig& c) {
  auto rng = stream(c.seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix profile(kNumEmotions, c.latent_dim * features::kNumBands);
  for (Eigen::Index i = 0; i < profile.size(); ++i) profile.data()[i] = normal(rng);
  return profile;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& c) {
  validate(c);
  const auto& bands = features::canonical_bands();
  const int n_bands = features::kNumBands;

  SyntheticDataset ds;
  ds.class_profile = synthetic_class_profile(c);
  ds.base_band_power = kBasePower;

  const auto wet_n = static_cast<Eigen::Index>(std::llround(c.trial_seconds * c.wet_rate_hz));
  const auto dry_n = static_cast<Eigen::Index>(std::llround(c.trial_seconds * c.dry_rate_hz));
  const auto n_knots = static_cast<std::size_t>(std::ceil(c.trial_seconds / kDriftKnotSeconds)) + 2;

  for (int si = 0; si < c.n_subjects; ++si) {
    const int subject = c.first_subject_id + si;
    auto srng = stream(c.seed, 2, static_cast<std::uint64_t>(subject));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double mix_scale = 1.0 / std::sqrt(static_cast<double>(c.latent_dim));
    Matrix wet_mix(c.wet_channels, c.latent_dim);
    Matrix dry_mix(c.dry_channels, c.latent_dim);
    for (Eigen::Index i = 0; i < wet_mix.size(); ++i) wet_mix.data()[i] = normal(srng) * mix_scale;
    for (Eigen::Index i = 0; i < dry_mix.size(); ++i) dry_mix.data()[i] = normal(srng) * mix_scale;
    Matrix subject_offset(c.latent_dim, n_bands);
    for (Eigen::Index i = 0; i < subject_offset.size(); ++i) subject_offset.data()[i] = normal(srng) * c.subject_jitter;

    // One emotion per trial slot, permuted per block.
    std::vector<std::vector<Emotion>> block_labels;
    for (int b = 0; b < c.n_blocks; ++b) {
      std::vector<Emotion> labels;
      for (int t = 0; t < c.trials_per_block; ++t) labels.push_back(static_cast<Emotion>(t % kNumEmotions));
      std::shuffle(labels.begin(), labels.end(), srng);
      block_labels.push_back(std::move(labels));
    }

    if (c.retain_sources) {
      ds.wet_mixing.push_back(wet_mix);
      ds.dry_mixing.push_back(dry_mix);
    }

    for (int b = 0; b < c.n_blocks; ++b) {
      for (int t = 0; t < c.trials_per_block; ++t) {
        const Emotion label = block_labels[static_cast<std::size_t>(b)][static_cast<std::size_t>(t)];
        const int cls = static_cast<int>(label);
        auto trng = stream(c.seed, 3, static_cast<std::uint64_t>(subject),
                           static_cast<std::uint64_t>(b * 1000 + t));

        Matrix log_power(c.latent_dim, n_bands);
        Matrix wet_src(c.latent_dim, wet_n);
        Matrix dry_src(c.latent_dim, dry_n);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int s = 0; s < c.latent_dim; ++s) {
          std::vector<std::vector<Oscillator>> osc(static_cast<std::size_t>(n_bands));
          for (int k = 0; k < n_bands; ++k) {
            const double lp = std::log(kBasePower[static_cast<std::size_t>(k)]) +
                              c.class_contrast * ds.class_profile(cls, s * n_bands + k) + subject_offset(s, k) +
                              c.trial_jitter * normal(trng);
            log_power(s, k) = lp;
            const double amp = std::sqrt(2.0 * std::exp(lp) / c.components_per_band);
            const auto& band = bands[static_cast<std::size_t>(k)];
            for (int m = 0; m < c.components_per_band; ++m) {
              const double f = band.low_hz + (band.high_hz - band.low_hz) * unit(trng);
              osc[static_cast<std::size_t>(k)].push_back({f, 2.0 * std::numbers::pi * unit(trng), amp});
            }
          }
          if (c.source_dynamics > 0.0) {
            // Zero-mean slow wander of each band's log power, common to both devices.
            auto vrng = stream(c.seed, 5, static_cast<std::uint64_t>(subject),
                               static_cast<std::uint64_t>((b * 1000 + t) * 64 + s));
            std::vector<std::vector<double>> knots(static_cast<std::size_t>(n_bands), std::vector<double>(n_knots));
            for (auto& band_knots : knots) {
              for (auto& v : band_knots) v = c.source_dynamics * normal(vrng);
            }
            render_modulated(osc, knots, c.wet_rate_hz, wet_n, wet_src.row(s));
            render_modulated(osc, knots, c.dry_rate_hz, dry_n, dry_src.row(s));
          } else {
            std::vector<Oscillator> all;
            for (const auto& band_osc : osc) all.insert(all.end(), band_osc.begin(), band_osc.end());
            render(all, c.wet_rate_hz, wet_n, wet_src.row(s));
            render(all, c.dry_rate_hz, dry_n, dry_src.row(s));
          }
        }

        RawTrial wet;
        wet.key = TrialKey{subject, DeviceKind::Wet, b + 1, t + 1};
        wet.label = label;
        wet.label_code = cls;
        wet.sample_rate_hz = c.wet_rate_hz;
        wet.data = wet_mix * wet_src;
        RawTrial dry;
        dry.key = TrialKey{subject, DeviceKind::Dry, b + 1, t + 1};
        dry.label = label;
        dry.label_code = cls;
        dry.sample_rate_hz = c.dry_rate_hz;
        dry.data = dry_mix * dry_src;

        if (c.wet_noise_sigma > 0.0) {
          for (Eigen::Index i = 0; i < wet.data.size(); ++i) wet.data.data()[i] += c.wet_noise_sigma * normal(trng);
        }
        if (c.dry_noise_drift > 0.0) {
          // Contact noise whose log-amplitude wanders per channel: a trial
          // offset plus knots every kDriftKnotSeconds, linearly interpolated.
          auto drng = stream(c.seed, 4, static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(b * 1000 + t));
          for (Eigen::Index ch = 0; ch < dry.data.rows(); ++ch) {
            const double offset = c.dry_noise_drift * normal(drng);
            std::vector<double> knots(n_knots);
            for (auto& k : knots) k = offset + 0.5 * c.dry_noise_drift * normal(drng);
            for (Eigen::Index i = 0; i < dry_n; ++i) {
              dry.data(ch, i) += c.dry_noise_sigma * std::exp(knot_curve(knots, c.dry_rate_hz, i)) * normal(drng);
            }
          }
        } else {
          for (Eigen::Index i = 0; i < dry.data.size(); ++i) dry.data.data()[i] += c.dry_noise_sigma * normal(trng);
        }

        if (c.retain_sources) {
          ds.sources.push_back({wet.key, std::move(wet_src), std::move(dry_src), std::move(log_power)});
        }
        ds.wet.push_back(std::move(wet));
        ds.dry.push_back(std::move(dry));
      }
    }
  }
  return ds;
}

}  // namespace decan
