#include "stimeeg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace stimeeg::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Central moments m2, m3, m4 (population). Returns false if m2 is negligible
// relative to the data scale, which happens for constant inputs up to rounding.
bool central_moments(std::span<const double> x, double& m2, double& m3, double& m4) {
  const double mu = mean(x);
  m2 = m3 = m4 = 0.0;
  double scale = 0.0;
  for (double v : x) {
    const double d = v - mu;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
    scale = std::max(scale, std::abs(v));
  }
  const auto n = static_cast<double>(x.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  return m2 > 1e-24 * scale * scale && m2 > 0.0;
}

}  // namespace

double mean(std::span<const double> x) {
  if (x.empty()) return kNaN;
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double quantile(std::span<const double> x, double q) {
  if (x.empty()) return kNaN;
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + (v[hi] - v[lo]) * frac;
}

double median(std::span<const double> x) { return quantile(x, 0.5); }

double mad(std::span<const double> x) {
  if (x.empty()) return kNaN;
  const double med = median(x);
  std::vector<double> dev(x.size());
  std::transform(x.begin(), x.end(), dev.begin(), [med](double v) { return std::abs(v - med); });
  return median(dev);
}

double stddev(std::span<const double> x, int ddof) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (n <= ddof) return kNaN;
  const double mu = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(n - ddof));
}

double skewness(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 3) return kNaN;
  double m2, m3, m4;
  if (!central_moments(x, m2, m3, m4)) return kNaN;
  const double g1 = m3 / std::pow(m2, 1.5);
  return g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0);
}

double excess_kurtosis(std::span<const double> x) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 4) return kNaN;
  double m2, m3, m4;
  if (!central_moments(x, m2, m3, m4)) return kNaN;
  const double g2 = m4 / (m2 * m2) - 3.0;
  return (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0);
}

}  // namespace stimeeg::stats
