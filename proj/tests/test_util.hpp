#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace testutil {

inline constexpr double kPi = std::numbers::pi;

inline std::vector<double> sine(std::size_t n, double freq, double fs, double amp = 1.0,
                                double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * kPi * freq * static_cast<double>(i) / fs + phase);
  }
  return x;
}

inline std::vector<double> white_noise(std::size_t n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> x(n);
  for (auto& v : x) v = dist(rng);
  return x;
}

inline double rms(std::span<const double> x, std::size_t skip = 0) {
  double s = 0.0;
  for (std::size_t i = skip; i + skip < x.size(); ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(x.size() - 2 * skip));
}

/// Naive O(n^2) DFT magnitude at integer bin k (independent of the FFT path).
inline double dft_magnitude(std::span<const double> x, double k) {
  std::complex<double> acc{};
  const auto n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += x[i] * std::polar(1.0, -2.0 * kPi * k * static_cast<double>(i) / n);
  }
  return std::abs(acc);
}

/// Frequency of the largest naive-DFT bin in [fmin, fmax], resolution fs/n.
inline double dft_peak_frequency(std::span<const double> x, double fs, double fmin,
                                 double fmax) {
  const auto n = static_cast<double>(x.size());
  double best = -1.0, best_f = 0.0;
  for (std::size_t k = 1; k < x.size() / 2; ++k) {
    const double f = static_cast<double>(k) * fs / n;
    if (f < fmin || f > fmax) continue;
    const double m = dft_magnitude(x, static_cast<double>(k));
    if (m > best) {
      best = m;
      best_f = f;
    }
  }
  return best_f;
}

}  // namespace testutil
