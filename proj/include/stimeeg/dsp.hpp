#pragma once

#include <array>
#include <complex>
#include <span>
#include <string_view>
#include <vector>

namespace stimeeg::dsp {

using cplx = std::complex<double>;

/// In-place unnormalized DFT of arbitrary length (FFTW backed). The inverse is
/// scaled by 1/n so that inverse(forward(x)) == x.
void fft(std::vector<cplx>& data);
void ifft(std::vector<cplx>& data);

/// DFT of a real signal, zero-padded to `n` (n >= x.size(), 0 means x.size()).
std::vector<cplx> fft_real(std::span<const double> x, std::size_t n = 0);

std::size_t next_pow2(std::size_t n);

/// One biquad: b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

/// Cascade of second-order sections.
struct SosFilter {
  std::vector<Biquad> sections;

  /// Complex frequency response at `freq_hz` for sampling rate `fs`.
  cplx response(double freq_hz, double fs) const;
  /// Number of samples for the impulse response envelope to decay below 1e-6.
  std::size_t effective_length() const;
};

SosFilter butter_highpass(int order, double cutoff_hz, double fs);
SosFilter butter_lowpass(int order, double cutoff_hz, double fs);
/// `order` is the prototype order; the digital filter has 2*order poles.
SosFilter butter_bandpass(int order, double low_hz, double high_hz, double fs);
/// Second-order IIR notch with quality factor q.
SosFilter iir_notch(double freq_hz, double q, double fs);

/// Causal filtering with zero initial state.
std::vector<double> sosfilt(const SosFilter& f, std::span<const double> x);

/// Forward-backward filtering. The input is extended by odd reflection of
/// 3 x effective_length() samples (clipped to x.size()-1) and both passes
/// start from the step-response steady state.
std::vector<double> filtfilt(const SosFilter& f, std::span<const double> x);

/// Periodic Hann window of length n.
std::vector<double> hann(std::size_t n);

struct Psd {
  std::vector<double> freqs;
  std::vector<double> power;  // one-sided density, units^2 / Hz
  double df = 0.0;
};

/// Welch estimate: Hann sub-windows of `segment_s` seconds, 50% overlap,
/// constant detrend, one-sided density.
Psd welch(std::span<const double> x, double fs, double segment_s = 1.0);

/// Integrated power over [low, high).
double band_power(const Psd& psd, double low_hz, double high_hz);

/// Analytic signal x + i H{x} via the frequency-domain Hilbert transform.
std::vector<cplx> analytic_signal(std::span<const double> x);

struct Band {
  std::string_view name;
  double low;
  double high;
};

/// delta, theta, alpha, beta, gamma with gamma capped at min(45, 0.9 * fs / 2).
std::array<Band, 5> standard_bands(double fs);

}  // namespace stimeeg::dsp
