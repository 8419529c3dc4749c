#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stimeeg/core.hpp"
#include "stimeeg/preprocess.hpp"
#include "stimeeg/recording.hpp"

namespace stimeeg::features {

enum class Family { UTM, Spectral, CWT, DWT, mST, sST, CC, PLV, GCC, GPLV };
enum class Combiner { Mean, Median, Std, Skewness, Kurtosis };

inline constexpr std::array<Family, 10> kAllFamilies = {
    Family::UTM, Family::Spectral, Family::CWT, Family::DWT, Family::mST,
    Family::sST, Family::CC,       Family::PLV, Family::GCC, Family::GPLV};
inline constexpr std::array<Combiner, 5> kAllCombiners = {
    Combiner::Mean, Combiner::Median, Combiner::Std, Combiner::Skewness, Combiner::Kurtosis};
inline constexpr std::array<double, 6> kWindowLengths = {1, 2, 5, 10, 20, 60};

std::string_view to_string(Family f);
std::string_view to_string(Combiner c);
Family parse_family(std::string_view text);
Combiner parse_combiner(std::string_view text);

struct FeatureConfig {
  Family family = Family::Spectral;
  preprocess::MontageKind montage = preprocess::MontageKind::CAR;
  double window_s = 10.0;
  Combiner combiner = Combiner::Mean;

  /// "Spectral/CAR/10s/Mean"
  std::string key() const;
  static FeatureConfig parse(std::string_view key);
  bool operator==(const FeatureConfig&) const = default;
};

// ---- per-window kernels ----------------------------------------------------

inline constexpr std::array<std::string_view, 9> kUtmNames = {
    "median", "iqr", "mad", "peaks", "zero_crossings", "teager", "energy", "power", "entropy"};

/// The nine univariate statistics of one channel, in kUtmNames order.
std::array<double, 9> utm_channel(std::span<const double> x);
std::size_t zero_crossings(std::span<const double> x);
std::size_t peak_count(std::span<const double> x);
double mean_teager(std::span<const double> x);
/// Shannon entropy (bits) of a 64-bin equal-width amplitude histogram.
double amplitude_entropy(std::span<const double> x);

/// Relative power in the five standard bands; returns nullopt for a channel
/// without power in [1, gamma_max).
std::optional<std::array<double, 5>> relative_band_power(std::span<const double> x, double fs);

/// 13 log-spaced Morlet centre frequencies from 1 Hz to min(45, 0.9 fs/2).
std::vector<double> cwt_frequencies(double fs);
/// |W|^2 of the analytic Morlet (w0 = 6) transform, one row per frequency.
Matrix cwt_power(std::span<const double> x, double fs, std::span<const double> freqs);

struct DwtDecomposition {
  std::vector<std::vector<double>> details;  // level 1 (finest) first
  std::vector<double> approximation;
};
/// Periodised Daubechies-4 decomposition. Odd lengths at any level are padded
/// by repeating the last sample. Requires x.size() >= 2^levels.
DwtDecomposition dwt_db4(std::span<const double> x, int levels = 6);

struct StockwellBands {
  std::array<double, 5> mean_sqrt_std{};  // mST per band
  std::array<double, 5> power_skewness{};  // sST per band
};
StockwellBands stockwell_bands(std::span<const double> x, double fs);

/// Maximum over |lag| <= max_lag of the absolute Pearson correlation between
/// a[n] and b[n + lag] over their overlap. Returns nullopt if either input is
/// constant.
std::optional<double> max_cross_correlation(std::span<const double> a, std::span<const double> b,
                                            std::size_t max_lag);
/// Lag (in samples, b relative to a) attaining the maximum above.
long best_lag(std::span<const double> a, std::span<const double> b, std::size_t max_lag);

struct Connectivity {
  Matrix values;  // symmetric, zero diagonal
  std::size_t flagged_pairs = 0;
};
/// Cross-correlation connectivity with lags up to 0.25 s.
Connectivity cc_matrix(const Matrix& window, double fs);
/// One phase-locking matrix per standard band; 10% of each edge discarded.
std::array<Connectivity, 5> plv_matrices(const Matrix& window, double fs);

struct Extraction {
  std::vector<double> values;
  std::size_t flags = 0;
};

/// Feature vectors for several families over the same window. CC/GCC and
/// PLV/GPLV share the underlying connectivity.
std::vector<Extraction> extract(std::span<const Family> families, const Matrix& window, double fs);
Extraction extract(Family family, const Matrix& window, double fs);

std::vector<std::string> feature_names(Family family, const std::vector<std::string>& channels,
                                       double fs);

/// Elementwise statistic across windows (rows). Std uses ddof = 1; too few
/// windows or zero variance gives NaN.
std::vector<double> combine(const std::vector<std::vector<double>>& windows, Combiner c);

// ---- matrices ----------------------------------------------------------------

struct FeatureMatrix {
  FeatureConfig config;
  SegmentKind segment = SegmentKind::Resting;
  std::vector<std::string> subject_ids;
  std::vector<std::optional<Label>> labels;
  std::vector<bool> ied_free;
  std::vector<std::string> feature_names;
  Matrix X;  // subjects x features, NaN where undefined
};

struct BuildOptions {
  std::size_t threads = 1;
};

/// One matrix per config, rows in first-seen subject order (first recording
/// per subject). Subjects without the segment are dropped; subjects whose
/// segment yields no usable window get a NaN row. Both cases are reported in
/// `warnings`.
std::vector<FeatureMatrix> build_feature_matrices(const std::vector<Recording>& recordings,
                                                  SegmentKind segment,
                                                  const std::vector<FeatureConfig>& configs,
                                                  std::vector<std::string>* warnings = nullptr,
                                                  const BuildOptions& opts = {});

FeatureMatrix build_feature_matrix(const std::vector<Recording>& recordings,
                                   const FeatureConfig& config, SegmentKind segment,
                                   std::vector<std::string>* warnings = nullptr);

}  // namespace stimeeg::features
