#include "decan/features.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "decan/binary_io.hpp"
#include "decan/dataset.hpp"
#include "decan/dsp.hpp"

namespace decan::features {

using nlohmann::json;

const std::array<BandSpec, kNumBands>& canonical_bands() {
  static const std::array<BandSpec, kNumBands> bands{{
      {Band::Delta, 1.0, 4.0},
      {Band::Theta, 4.0, 8.0},
      {Band::Alpha, 8.0, 14.0},
      {Band::Beta, 14.0, 31.0},
      {Band::Gamma, 31.0, 50.0},
  }};
  return bands;
}

std::string_view to_string(Band band) {
  switch (band) {
    case Band::Delta: return "delta";
    case Band::Theta: return "theta";
    case Band::Alpha: return "alpha";
    case Band::Beta: return "beta";
    case Band::Gamma: return "gamma";
  }
  return "?";
}

Band band_from_string(std::string_view name) {
  for (const auto& b : canonical_bands()) {
    if (to_string(b.band) == name) return b.band;
  }
  throw std::invalid_argument("unknown band: " + std::string(name));
}

double differential_entropy(std::span<const double> series) {
  if (series.size() < 2) throw std::invalid_argument("differential_entropy: need at least 2 samples");
  const auto n = static_cast<double>(series.size());
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= n;
  var = std::max(var, kVarianceFloor);
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * var);
}

FeatureTensor extract_features(const RawTrial& trial, std::span<const BandSpec> bands,
                               const ExtractOptions& options) {
  if (bands.empty()) throw std::invalid_argument("extract_features: no bands");
  validate(trial);
  const auto window = static_cast<Eigen::Index>(std::llround(options.segment_seconds * trial.sample_rate_hz));
  if (window < 2 || trial.samples() < window) {
    throw std::invalid_argument("trial shorter than one segment: " + to_string(trial.key));
  }

  FeatureTensor t;
  t.key = trial.key;
  t.label = trial.label;
  t.n_channels = trial.channels();
  t.n_segments = static_cast<int>(trial.samples() / window);
  t.segment_labels.assign(static_cast<std::size_t>(t.n_segments), trial.label_code);
  for (const auto& b : bands) t.bands.push_back(b.band);
  t.values.assign(static_cast<std::size_t>(t.n_segments) * t.n_channels * bands.size(), 0.0);

  for (std::size_t bi = 0; bi < bands.size(); ++bi) {
    const auto filter =
        dsp::design_bandpass(bands[bi].low_hz, bands[bi].high_hz, trial.sample_rate_hz, options.filter_order);
    for (int c = 0; c < t.n_channels; ++c) {
      std::span<const double> row(trial.data.row(c).data(), static_cast<std::size_t>(trial.samples()));
      const auto filtered = dsp::filtfilt(filter, row);
      for (int s = 0; s < t.n_segments; ++s) {
        std::span<const double> seg(filtered.data() + static_cast<std::size_t>(s * window),
                                    static_cast<std::size_t>(window));
        t.at(s, c, static_cast<int>(bi)) = differential_entropy(seg);
      }
    }
  }
  return t;
}

std::vector<double> lds_smooth(std::span<const double> series, const LdsParams& p) {
  if (series.empty()) throw std::invalid_argument("lds_smooth: empty series");
  if (!(p.process_var > 0.0) || !(p.observation_var > 0.0) || !(p.init_var > 0.0)) {
    throw std::invalid_argument("lds_smooth: variances must be positive");
  }
  const std::size_t n = series.size();
  const double a = p.transition;
  const double c = p.observation;
  std::vector<double> m(n), P(n), m_pred(n), P_pred(n);

  for (std::size_t t = 0; t < n; ++t) {
    if (t == 0) {
      m_pred[0] = p.init_mean.value_or(series[0] / c);
      P_pred[0] = p.init_var;
    } else {
      m_pred[t] = a * m[t - 1];
      P_pred[t] = a * a * P[t - 1] + p.process_var;
    }
    const double k = P_pred[t] * c / (c * c * P_pred[t] + p.observation_var);
    m[t] = m_pred[t] + k * (series[t] - c * m_pred[t]);
    P[t] = (1.0 - k * c) * P_pred[t];
  }

  std::vector<double> ms(m);
  for (std::size_t t = n - 1; t-- > 0;) {
    const double j = P[t] * a / P_pred[t + 1];
    ms[t] = m[t] + j * (ms[t + 1] - m_pred[t + 1]);
  }
  return ms;
}

void smooth_tensor(FeatureTensor& tensor, const LdsParams& params) {
  std::vector<double> series(static_cast<std::size_t>(tensor.n_segments));
  for (int c = 0; c < tensor.n_channels; ++c) {
    for (int b = 0; b < tensor.n_bands(); ++b) {
      for (int s = 0; s < tensor.n_segments; ++s) series[static_cast<std::size_t>(s)] = tensor.at(s, c, b);
      const auto sm = lds_smooth(series, params);
      for (int s = 0; s < tensor.n_segments; ++s) tensor.at(s, c, b) = sm[static_cast<std::size_t>(s)];
    }
  }
  tensor.smoothed = true;
}

Matrix flatten_features(const FeatureTensor& tensor, std::span<const Band> mask) {
  if (mask.empty()) throw std::invalid_argument("flatten_features: empty band mask");
  std::vector<int> cols;
  for (Band b : mask) {
    int found = -1;
    for (int i = 0; i < tensor.n_bands(); ++i) {
      if (tensor.bands[static_cast<std::size_t>(i)] == b) found = i;
    }
    if (found < 0) throw std::invalid_argument("flatten_features: band not in tensor: " + std::string(to_string(b)));
    cols.push_back(found);
  }
  const auto width = static_cast<Eigen::Index>(cols.size());
  Matrix out(tensor.n_segments, tensor.n_channels * width);
  for (int s = 0; s < tensor.n_segments; ++s) {
    for (int c = 0; c < tensor.n_channels; ++c) {
      for (Eigen::Index k = 0; k < width; ++k) out(s, c * width + k) = tensor.at(s, c, cols[static_cast<std::size_t>(k)]);
    }
  }
  return out;
}

Matrix flatten_features(const FeatureTensor& tensor) { return flatten_features(tensor, tensor.bands); }

FeatureTensor unflatten_features(const Matrix& flat, const FeatureTensor& like) {
  if (flat.rows() != like.n_segments || flat.cols() != static_cast<Eigen::Index>(like.n_channels) * like.n_bands()) {
    throw std::invalid_argument("unflatten_features: shape does not match template tensor");
  }
  FeatureTensor t = like;
  for (int s = 0; s < t.n_segments; ++s) {
    for (int c = 0; c < t.n_channels; ++c) {
      for (int b = 0; b < t.n_bands(); ++b) t.at(s, c, b) = flat(s, c * t.n_bands() + b);
    }
  }
  return t;
}

namespace {
constexpr std::string_view kMagic = "DECANFT1";
}

void write_feature_file(const std::filesystem::path& path, const FeatureTensor& t, const std::string& config_hash) {
  json bands = json::array();
  for (Band b : t.bands) bands.push_back(std::string(to_string(b)));
  json header = {
      {"dims", {t.n_segments, t.n_channels, t.n_bands()}},
      {"subject", t.key.subject_id},
      {"device", std::string(to_string(t.key.device))},
      {"block", t.key.block_id},
      {"trial", t.key.trial_id},
      {"label", std::string(decan::to_string(t.label))},
      {"segment_labels", t.segment_labels},
      {"bands", bands},
      {"smoothed", t.smoothed},
      {"config_hash", config_hash},
  };
  FramedFile f;
  f.header_json = header.dump();
  append_f32_le(f.payload, t.values);
  write_file_bytes(path, encode_framed(kMagic, f));
}

FeatureTensor read_feature_file(const std::filesystem::path& path, std::string* config_hash) {
  const FramedFile f = decode_framed(kMagic, read_file_bytes(path), path.string());
  const json h = json::parse(f.header_json);
  FeatureTensor t;
  const auto dims = h.at("dims").get<std::vector<int>>();
  if (dims.size() != 3) throw std::runtime_error("bad dims in " + path.string());
  t.n_segments = dims[0];
  t.n_channels = dims[1];
  t.key = TrialKey{h.at("subject").get<int>(), device_from_string(h.at("device").get<std::string>()),
                   h.at("block").get<int>(), h.at("trial").get<int>()};
  t.label = emotion_from_string(h.at("label").get<std::string>());
  t.segment_labels = h.at("segment_labels").get<std::vector<int>>();
  for (const auto& b : h.at("bands")) t.bands.push_back(band_from_string(b.get<std::string>()));
  t.smoothed = h.at("smoothed").get<bool>();
  if (static_cast<int>(t.bands.size()) != dims[2] ||
      static_cast<int>(t.segment_labels.size()) != t.n_segments) {
    throw std::runtime_error("inconsistent header in " + path.string());
  }
  t.values.resize(static_cast<std::size_t>(t.n_segments) * t.n_channels * t.bands.size());
  if (f.payload.size() != t.values.size() * 4) throw std::runtime_error("size mismatch: " + path.string());
  read_f32_le(std::span<const char>(f.payload.data(), f.payload.size()), t.values);
  if (config_hash) *config_hash = h.value("config_hash", std::string{});
  return t;
}

}  // namespace decan::features
