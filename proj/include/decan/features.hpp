#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decan/types.hpp"

namespace decan::features {

enum class Band { Delta = 0, Theta = 1, Alpha = 2, Beta = 3, Gamma = 4 };

inline constexpr int kNumBands = 5;

struct BandSpec {
  Band band{Band::Delta};
  double low_hz{0.0};
  double high_hz{0.0};
};

// delta 1-4, theta 4-8, alpha 8-14, beta 14-31, gamma 31-50 Hz.
const std::array<BandSpec, kNumBands>& canonical_bands();

std::string_view to_string(Band band);
Band band_from_string(std::string_view name);

// Variance floor applied before the logarithm.
inline constexpr double kVarianceFloor = 1e-10;

// 0.5 * ln(2*pi*e*var) in nats, with var the mean-removed population variance.
double differential_entropy(std::span<const double> series);

// DE features of one trial: segments x channels x bands, stored contiguously in
// (segment, channel, band) order.
struct FeatureTensor {
  TrialKey key;
  Emotion label{Emotion::Neutrality};
  std::vector<int> segment_labels;  // class code per segment
  std::vector<Band> bands;
  int n_segments{0};
  int n_channels{0};
  bool smoothed{false};
  std::vector<double> values;

  int n_bands() const { return static_cast<int>(bands.size()); }
  std::size_t index(int segment, int channel, int band) const {
    return (static_cast<std::size_t>(segment) * static_cast<std::size_t>(n_channels) +
            static_cast<std::size_t>(channel)) * bands.size() + static_cast<std::size_t>(band);
  }
  double& at(int segment, int channel, int band) { return values[index(segment, channel, band)]; }
  double at(int segment, int channel, int band) const { return values[index(segment, channel, band)]; }
};

struct ExtractOptions {
  double segment_seconds{5.0};
  int filter_order{4};
};

// Band-pass filters each channel per band (zero phase), segments, and takes
// the DE of every (segment, channel, band) cell. The trial should already be at
// the working rate.
FeatureTensor extract_features(const RawTrial& trial, std::span<const BandSpec> bands,
                               const ExtractOptions& options = {});

struct LdsParams {
  double transition{1.0};      // a
  double observation{1.0};     // c
  double process_var{0.01};    // q
  double observation_var{0.1}; // r
  std::optional<double> init_mean;  // defaults to the first observation / c
  double init_var{1.0};
};

// Posterior means of a scalar linear dynamical system: Kalman filter forward,
// Rauch-Tung-Striebel smoother backward.
std::vector<double> lds_smooth(std::span<const double> series, const LdsParams& params = {});

// Smooths every (channel, band) series over the chronological segment axis of
// one trial, in place.
void smooth_tensor(FeatureTensor& tensor, const LdsParams& params = {});

// Row per segment; columns ordered channel-major, band-minor, with the bands
// taken in `mask` order.
Matrix flatten_features(const FeatureTensor& tensor, std::span<const Band> mask);
Matrix flatten_features(const FeatureTensor& tensor);

// Inverse of the full-mask flattening; metadata is copied from `like`.
FeatureTensor unflatten_features(const Matrix& flat, const FeatureTensor& like);

// Framed file: "DECANFT1", JSON header with dims/ids/labels/bands/smoothed
// flag, then float32 LE values in flattening order.
void write_feature_file(const std::filesystem::path& path, const FeatureTensor& tensor,
                        const std::string& config_hash = {});
FeatureTensor read_feature_file(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace decan::features
