#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

#include "decan/types.hpp"

namespace decan::dsp {

// One second-order section, H(z) = (b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2).
struct Biquad {
  double b0{1.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};

  std::complex<double> response(double omega) const;
  // Largest pole modulus.
  double pole_radius() const;
};

enum class FilterKind { Identity, Bandpass, Notch };

struct IirFilter {
  std::vector<Biquad> sections;
  FilterKind kind{FilterKind::Identity};
  double low_hz{0.0};
  double high_hz{0.0};
  double fs_hz{0.0};
  int order{0};

  static IirFilter identity() { return {}; }

  std::complex<double> response_at(double freq_hz, double fs_hz) const;
  // Single-pass magnitude in dB at freq_hz, evaluated from the coefficients.
  double gain_db(double freq_hz) const;
  bool stable() const;
};

// Butterworth band-pass from an order-N analog prototype (2N poles, N sections),
// bilinear transform with pre-warped edges.
IirFilter design_bandpass(double low_hz, double high_hz, double fs_hz, int order);

// Second-order notch with zeros on the unit circle at f0 and -3 dB width f0/q.
IirFilter design_notch(double f0_hz, double q, double fs_hz);

// Causal cascade filtering from zero state.
std::vector<double> sosfilt(const IirFilter& filter, std::span<const double> signal);

// Number of samples reflected at each edge by filtfilt.
std::size_t filtfilt_padding(const IirFilter& filter);

// Zero-phase forward-backward filtering. Edges are extended by odd reflection
// and each pass starts from the steady-state response to the edge value.
std::vector<double> filtfilt(const IirFilter& filter, std::span<const double> signal);

// Rational resampler: upsample by `up`, apply a linear-phase Kaiser low-pass,
// keep every `down`-th sample. Passband edge 0.8 and stopband edge 1.0 of the
// output Nyquist frequency.
struct ResamplerSpec {
  int up{1};
  int down{1};
  std::vector<double> kernel;  // FIR taps at the upsampled rate, odd length

  // Reduces up/down by their gcd and designs the kernel.
  static ResamplerSpec make(int up, int down, double stopband_db = 60.0);
  // up/down for integral rates in_hz -> out_hz.
  static ResamplerSpec between(double in_hz, double out_hz, double stopband_db = 60.0);

  bool is_identity() const { return up == 1 && down == 1; }
};

std::vector<double> kaiser_lowpass(double cutoff, double transition, double stopband_db);

std::vector<double> resample(std::span<const double> signal, const ResamplerSpec& spec);

struct PreprocessOptions {
  double band_low_hz{1.0};
  double band_high_hz{50.0};
  int band_order{4};
  double notch_hz{50.0};
  double notch_q{30.0};
  double target_rate_hz{200.0};
};

// Band-pass, then notch, then resample each channel to the target rate.
RawTrial preprocess_trial(const RawTrial& trial, const PreprocessOptions& options = {});

}  // namespace decan::dsp
