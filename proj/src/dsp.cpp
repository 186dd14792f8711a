#include "decan/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace decan::dsp {

using cd = std::complex<double>;

std::complex<double> Biquad::response(double omega) const {
  const cd z1 = std::polar(1.0, -omega);
  const cd z2 = z1 * z1;
  return (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2);
}

double Biquad::pole_radius() const {
  // roots of z^2 + a1 z + a2
  const cd disc = std::sqrt(cd(a1 * a1 - 4.0 * a2, 0.0));
  const cd r1 = (-a1 + disc) / 2.0;
  const cd r2 = (-a1 - disc) / 2.0;
  return std::max(std::abs(r1), std::abs(r2));
}

std::complex<double> IirFilter::response_at(double freq_hz, double fs) const {
  const double omega = 2.0 * std::numbers::pi * freq_hz / fs;
  cd h(1.0, 0.0);
  for (const auto& s : sections) h *= s.response(omega);
  return h;
}

double IirFilter::gain_db(double freq_hz) const {
  if (sections.empty()) return 0.0;
  const double mag = std::abs(response_at(freq_hz, fs_hz));
  return 20.0 * std::log10(std::max(mag, 1e-300));
}

bool IirFilter::stable() const {
  return std::all_of(sections.begin(), sections.end(), [](const Biquad& s) {
    return std::isfinite(s.b0) && std::isfinite(s.b1) && std::isfinite(s.b2) && std::isfinite(s.a1) &&
           std::isfinite(s.a2) && s.pole_radius() < 1.0;
  });
}

namespace {

Biquad section_from_poles(cd p1, cd p2) {
  Biquad s;
  s.b0 = 1.0;
  s.b1 = 0.0;
  s.b2 = -1.0;  // zeros at z = 1 and z = -1
  s.a1 = -(p1 + p2).real();
  s.a2 = (p1 * p2).real();
  return s;
}

}  // namespace

IirFilter design_bandpass(double low_hz, double high_hz, double fs_hz, int order) {
  if (!(fs_hz > 0.0)) throw std::invalid_argument("design_bandpass: sample rate must be positive");
  if (!(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < fs_hz / 2.0)) {
    throw std::invalid_argument("design_bandpass: need 0 < low < high < fs/2, got low=" + std::to_string(low_hz) +
                                " high=" + std::to_string(high_hz) + " fs=" + std::to_string(fs_hz));
  }
  if (order < 1) throw std::invalid_argument("design_bandpass: order must be >= 1");

  const double fs2 = 2.0 * fs_hz;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / fs_hz);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / fs_hz);
  const double bw = w2 - w1;
  const double w0 = std::sqrt(w1 * w2);
  auto to_z = [fs2](cd s) { return (fs2 + s) / (fs2 - s); };

  IirFilter f;
  f.kind = FilterKind::Bandpass;
  f.low_hz = low_hz;
  f.high_hz = high_hz;
  f.fs_hz = fs_hz;
  f.order = order;
  // Prototype poles -exp(j*pi*m/(2N)), m = -N+1, -N+3, ..., N-1. Only the
  // upper-half-plane ones (m < 0) and the real one (m = 0) are visited; their
  // conjugates are implied by the real sections.
  for (int m = -order + 1; m <= 0; m += 2) {
    const cd p = -std::polar(1.0, std::numbers::pi * m / (2.0 * order));
    const cd a = p * bw / 2.0;
    const cd d = std::sqrt(a * a - w0 * w0);
    const cd z1 = to_z(a + d);
    const cd z2 = to_z(a - d);
    if (m == 0) {
      f.sections.push_back(section_from_poles(z1, z2));
    } else {
      f.sections.push_back(section_from_poles(z1, std::conj(z1)));
      f.sections.push_back(section_from_poles(z2, std::conj(z2)));
    }
  }

  // Unit gain at the (warped) centre frequency, spread evenly over sections.
  const double centre = 2.0 * std::atan(w0 / fs2);
  cd total(1.0, 0.0);
  for (auto& s : f.sections) {
    const double g = 1.0 / std::abs(s.response(centre));
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
    total *= s.response(centre);
  }
  if (total.real() < 0.0) {
    f.sections.front().b0 = -f.sections.front().b0;
    f.sections.front().b1 = -f.sections.front().b1;
    f.sections.front().b2 = -f.sections.front().b2;
  }
  if (!f.stable()) throw std::runtime_error("design_bandpass: unstable design");
  return f;
}

IirFilter design_notch(double f0_hz, double q, double fs_hz) {
  if (!(fs_hz > 0.0)) throw std::invalid_argument("design_notch: sample rate must be positive");
  if (!(f0_hz > 0.0) || !(f0_hz < fs_hz / 2.0)) {
    throw std::invalid_argument("design_notch: need 0 < f0 < fs/2, got f0=" + std::to_string(f0_hz) +
                                " fs=" + std::to_string(fs_hz));
  }
  if (!(q > 0.0)) throw std::invalid_argument("design_notch: q must be positive");
  const double w0 = 2.0 * std::numbers::pi * f0_hz / fs_hz;
  const double beta = std::tan(w0 / q / 2.0);
  const double gain = 1.0 / (1.0 + beta);
  Biquad s;
  s.b0 = gain;
  s.b1 = -2.0 * gain * std::cos(w0);
  s.b2 = gain;
  s.a1 = -2.0 * gain * std::cos(w0);
  s.a2 = 2.0 * gain - 1.0;
  IirFilter f;
  f.sections = {s};
  f.kind = FilterKind::Notch;
  f.low_hz = f0_hz;
  f.high_hz = f0_hz;
  f.fs_hz = fs_hz;
  f.order = 2;
  if (!f.stable()) throw std::runtime_error("design_notch: unstable design");
  return f;
}

namespace {

struct State {
  double z1{0.0}, z2{0.0};
};

// Transposed direct form II, in place.
void run_section(const Biquad& s, State st, std::vector<double>& x) {
  for (double& v : x) {
    const double in = v;
    const double out = s.b0 * in + st.z1;
    st.z1 = s.b1 * in - s.a1 * out + st.z2;
    st.z2 = s.b2 * in - s.a2 * out;
    v = out;
  }
}

// Steady-state response of each section to a constant input `level`.
std::vector<State> steady_state(const IirFilter& f, double level) {
  std::vector<State> zi;
  zi.reserve(f.sections.size());
  double u = level;
  for (const auto& s : f.sections) {
    const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double y = u * dc;
    State st;
    st.z2 = s.b2 * u - s.a2 * y;
    st.z1 = s.b1 * u - s.a1 * y + st.z2;
    zi.push_back(st);
    u = y;
  }
  return zi;
}

void run_cascade(const IirFilter& f, std::vector<double>& x, bool steady_start) {
  if (x.empty()) return;
  const auto zi = steady_start ? steady_state(f, x.front()) : std::vector<State>(f.sections.size());
  for (std::size_t i = 0; i < f.sections.size(); ++i) run_section(f.sections[i], zi[i], x);
}

}  // namespace

std::vector<double> sosfilt(const IirFilter& filter, std::span<const double> signal) {
  std::vector<double> x(signal.begin(), signal.end());
  run_cascade(filter, x, false);
  return x;
}

std::size_t filtfilt_padding(const IirFilter& filter) {
  return 3 * (2 * filter.sections.size() + 1);
}

std::vector<double> filtfilt(const IirFilter& filter, std::span<const double> signal) {
  const std::size_t n = signal.size();
  const std::size_t pad = filtfilt_padding(filter);
  if (n <= pad) {
    throw std::invalid_argument("filtfilt: signal too short (" + std::to_string(n) + " samples, need > " +
                                std::to_string(pad) + ")");
  }
  std::vector<double> x;
  x.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) x.push_back(2.0 * signal[0] - signal[i]);
  x.insert(x.end(), signal.begin(), signal.end());
  for (std::size_t i = 1; i <= pad; ++i) x.push_back(2.0 * signal[n - 1] - signal[n - 1 - i]);

  run_cascade(filter, x, true);
  std::reverse(x.begin(), x.end());
  run_cascade(filter, x, true);
  std::reverse(x.begin(), x.end());
  return {x.begin() + static_cast<std::ptrdiff_t>(pad), x.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> kaiser_lowpass(double cutoff, double transition, double stopband_db) {
  if (!(cutoff > 0.0 && cutoff <= 1.0) || !(transition > 0.0)) {
    throw std::invalid_argument("kaiser_lowpass: cutoff must be in (0,1] and transition > 0");
  }
  const double a = stopband_db;
  double beta = 0.0;
  if (a > 50.0) {
    beta = 0.1102 * (a - 8.7);
  } else if (a >= 21.0) {
    beta = 0.5842 * std::pow(a - 21.0, 0.4) + 0.07886 * (a - 21.0);
  }
  auto taps = static_cast<int>(std::ceil((a - 7.95) / (2.285 * std::numbers::pi * transition))) + 1;
  if (taps % 2 == 0) ++taps;
  const double mid = (taps - 1) / 2.0;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(static_cast<std::size_t>(taps));
  for (int n = 0; n < taps; ++n) {
    const double t = n - mid;
    const double x = std::numbers::pi * cutoff * t;
    const double sinc = t == 0.0 ? 1.0 : std::sin(x) / x;
    const double r = t / mid;
    const double w = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[static_cast<std::size_t>(n)] = cutoff * sinc * w;
  }
  const double sum = std::accumulate(h.begin(), h.end(), 0.0);
  for (double& v : h) v /= sum;
  return h;
}

ResamplerSpec ResamplerSpec::make(int up, int down, double stopband_db) {
  if (up < 1 || down < 1) throw std::invalid_argument("resampler: up and down must be positive");
  const int g = std::gcd(up, down);
  ResamplerSpec r;
  r.up = up / g;
  r.down = down / g;
  if (!r.is_identity()) {
    const double edge = 1.0 / std::max(r.up, r.down);
    r.kernel = kaiser_lowpass(0.9 * edge, 0.2 * edge, stopband_db);
  }
  return r;
}

ResamplerSpec ResamplerSpec::between(double in_hz, double out_hz, double stopband_db) {
  const double in_r = std::round(in_hz);
  const double out_r = std::round(out_hz);
  if (!(in_hz > 0.0) || !(out_hz > 0.0) || std::abs(in_hz - in_r) > 1e-9 || std::abs(out_hz - out_r) > 1e-9) {
    throw std::invalid_argument("resampler: rates must be positive integers in Hz, got " + std::to_string(in_hz) +
                                " -> " + std::to_string(out_hz));
  }
  const auto a = static_cast<long long>(in_r);
  const auto b = static_cast<long long>(out_r);
  const long long g = std::gcd(a, b);
  if (b / g > 1'000'000 || a / g > 1'000'000) throw std::invalid_argument("resampler: ratio too complex");
  return make(static_cast<int>(b / g), static_cast<int>(a / g), stopband_db);
}

std::vector<double> resample(std::span<const double> signal, const ResamplerSpec& spec) {
  if (spec.up < 1 || spec.down < 1 || std::gcd(spec.up, spec.down) != 1) {
    throw std::invalid_argument("resample: degenerate spec (up/down must be positive and coprime)");
  }
  if (!spec.is_identity() && spec.kernel.size() % 2 == 0) {
    throw std::invalid_argument("resample: kernel length must be odd");
  }
  const auto n = static_cast<long long>(signal.size());
  if (n < spec.down || n == 0) throw std::invalid_argument("resample: signal shorter than the decimation factor");
  if (spec.is_identity()) return {signal.begin(), signal.end()};

  const long long up = spec.up;
  const long long down = spec.down;
  const auto taps = static_cast<long long>(spec.kernel.size());
  const long long mid = (taps - 1) / 2;
  const long long n_out = n * up / down;

  // Symmetric reflection about the end samples keeps DC exact near the edges.
  auto at = [&](long long i) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
      if (n == 1) i = 0;
    }
    return signal[static_cast<std::size_t>(i)];
  };

  std::vector<double> out(static_cast<std::size_t>(n_out));
  for (long long k = 0; k < n_out; ++k) {
    const long long t = k * down + mid;  // index into the upsampled stream, delay-compensated
    long long j = ((t % up) + up) % up;
    double acc = 0.0;
    for (; j < taps; j += up) {
      const long long m = t - j;
      // floor division: m is a multiple of up
      const long long idx = m >= 0 ? m / up : -((-m) / up);
      acc += spec.kernel[static_cast<std::size_t>(j)] * at(idx);
    }
    out[static_cast<std::size_t>(k)] = acc * static_cast<double>(up);
  }
  return out;
}

RawTrial preprocess_trial(const RawTrial& trial, const PreprocessOptions& options) {
  validate(trial);
  const double fs = trial.sample_rate_hz;
  const IirFilter band = design_bandpass(options.band_low_hz, options.band_high_hz, fs, options.band_order);
  const IirFilter notch = design_notch(options.notch_hz, options.notch_q, fs);
  const ResamplerSpec rs = ResamplerSpec::between(fs, options.target_rate_hz);

  RawTrial out;
  out.key = trial.key;
  out.label = trial.label;
  out.label_code = trial.label_code;
  out.sample_rate_hz = options.target_rate_hz;
  const auto n_out = trial.samples() * rs.up / rs.down;
  out.data.resize(trial.data.rows(), n_out);
  for (Eigen::Index c = 0; c < trial.data.rows(); ++c) {
    std::span<const double> row(trial.data.row(c).data(), static_cast<std::size_t>(trial.samples()));
    auto y = filtfilt(band, row);
    y = filtfilt(notch, y);
    y = resample(y, rs);
    std::copy(y.begin(), y.end(), out.data.row(c).data());
  }
  return out;
}

}  // namespace decan::dsp
