#pragma once

#include <span>

namespace stimeeg::stats {

double mean(std::span<const double> x);
double median(std::span<const double> x);
/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::span<const double> x, double q);
/// Median absolute deviation around the median (unscaled).
double mad(std::span<const double> x);
/// Standard deviation with `ddof` degrees of freedom removed. NaN when n <= ddof.
double stddev(std::span<const double> x, int ddof = 1);

// Bias-corrected sample moments. NaN when undefined (too few samples or zero
// variance).
double skewness(std::span<const double> x);
double excess_kurtosis(std::span<const double> x);

}  // namespace stimeeg::stats
