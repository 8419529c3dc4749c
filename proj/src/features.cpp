#include "stimeeg/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include "stimeeg/dsp.hpp"
#include "stimeeg/graph.hpp"
#include "stimeeg/stats.hpp"

namespace stimeeg::features {

namespace {

using dsp::cplx;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Daubechies 4 (eight taps) scaling filter.
constexpr std::array<double, 8> kDb4 = {
    0.23037781330885523,  0.7148465705525415,   0.6308807679295904,  -0.02798376941698385,
    -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278};

double population_std(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double m = stats::mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

bool is_constant(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

std::string pair_name(const std::string& a, const std::string& b) { return a + "~" + b; }

// Absolute Pearson correlation of a[n] and b[n + lag] for lag in [-max_lag, max_lag].
struct LagCorrelator {
  std::size_t n = 0, fft_len = 0, max_lag = 0;
  std::vector<std::vector<cplx>> spectra;
  std::vector<std::vector<double>> sum, sum_sq;  // prefix sums of demeaned signals
  std::vector<bool> constant;

  LagCorrelator(const Matrix& x, std::size_t lag) : n(x.cols()) {
    max_lag = std::min(lag, n >= 2 ? n - 2 : 0);
    fft_len = dsp::next_pow2(n + max_lag);
    for (std::size_t c = 0; c < x.rows(); ++c) {
      const auto row = x.row(c);
      constant.push_back(is_constant(row));
      const double m = stats::mean(row);
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) d[i] = row[i] - m;
      std::vector<double> s(n + 1, 0.0), q(n + 1, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        s[i + 1] = s[i] + d[i];
        q[i + 1] = q[i] + d[i] * d[i];
      }
      sum.push_back(std::move(s));
      sum_sq.push_back(std::move(q));
      spectra.push_back(dsp::fft_real(d, fft_len));
    }
  }

  // r[k] for lag = k - max_lag.
  std::vector<double> correlations(std::size_t a, std::size_t b) const {
    std::vector<cplx> prod(fft_len);
    for (std::size_t k = 0; k < fft_len; ++k) prod[k] = std::conj(spectra[a][k]) * spectra[b][k];
    dsp::ifft(prod);
    std::vector<double> r(2 * max_lag + 1, 0.0);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const long lag = static_cast<long>(k) - static_cast<long>(max_lag);
      const std::size_t shift = static_cast<std::size_t>(std::labs(lag));
      const std::size_t m = n - shift;
      const std::size_t a0 = lag >= 0 ? 0 : shift, b0 = lag >= 0 ? shift : 0;
      const double sab = prod[lag >= 0 ? shift : fft_len - shift].real();
      const double sa = sum[a][a0 + m] - sum[a][a0], sb = sum[b][b0 + m] - sum[b][b0];
      const double saa = sum_sq[a][a0 + m] - sum_sq[a][a0];
      const double sbb = sum_sq[b][b0 + m] - sum_sq[b][b0];
      const double md = static_cast<double>(m);
      const double va = md * saa - sa * sa, vb = md * sbb - sb * sb;
      if (va <= 1e-12 * md * saa || vb <= 1e-12 * md * sbb) continue;
      r[k] = std::clamp(std::abs(md * sab - sa * sb) / std::sqrt(va * vb), 0.0, 1.0);
    }
    return r;
  }
};

std::vector<std::vector<cplx>> unit_phasors(const Matrix& x, double fs, const dsp::Band& band,
                                            std::size_t trim) {
  const auto filter = dsp::butter_bandpass(4, band.low, band.high, fs);
  std::vector<std::vector<cplx>> out;
  for (std::size_t c = 0; c < x.rows(); ++c) {
    const auto z = dsp::analytic_signal(dsp::filtfilt(filter, x.row(c)));
    std::vector<cplx> u(z.begin() + static_cast<long>(trim), z.end() - static_cast<long>(trim));
    for (auto& v : u) {
      const double mag = std::abs(v);
      v = mag > 0.0 ? v / mag : cplx{};
    }
    out.push_back(std::move(u));
  }
  return out;
}

std::vector<double> upper_triangle(const Matrix& m) {
  std::vector<double> out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = i + 1; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

}  // namespace

// ---- names -------------------------------------------------------------------

std::string_view to_string(Family f) {
  switch (f) {
    case Family::UTM: return "UTM";
    case Family::Spectral: return "Spectral";
    case Family::CWT: return "CWT";
    case Family::DWT: return "DWT";
    case Family::mST: return "mST";
    case Family::sST: return "sST";
    case Family::CC: return "CC";
    case Family::PLV: return "PLV";
    case Family::GCC: return "GCC";
    case Family::GPLV: return "GPLV";
  }
  return "?";
}

std::string_view to_string(Combiner c) {
  switch (c) {
    case Combiner::Mean: return "Mean";
    case Combiner::Median: return "Median";
    case Combiner::Std: return "Std";
    case Combiner::Skewness: return "Skewness";
    case Combiner::Kurtosis: return "Kurtosis";
  }
  return "?";
}

Family parse_family(std::string_view text) {
  for (auto f : kAllFamilies) {
    if (text == to_string(f)) return f;
  }
  throw Error("unknown feature family '" + std::string(text) + "'");
}

Combiner parse_combiner(std::string_view text) {
  for (auto c : kAllCombiners) {
    if (text == to_string(c)) return c;
  }
  throw Error("unknown combiner '" + std::string(text) + "'");
}

std::string FeatureConfig::key() const {
  char win[32];
  std::snprintf(win, sizeof win, "%gs", window_s);
  return std::string(to_string(family)) + "/" + std::string(preprocess::to_string(montage)) + "/" +
         win + "/" + std::string(to_string(combiner));
}

FeatureConfig FeatureConfig::parse(std::string_view key) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto slash = key.find('/', start);
    parts.emplace_back(key.substr(start, slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  if (parts.size() != 4 || parts[2].empty() || parts[2].back() != 's') {
    throw Error("malformed feature config '" + std::string(key) + "'");
  }
  FeatureConfig c;
  c.family = parse_family(parts[0]);
  c.montage = preprocess::parse_montage(parts[1]);
  try {
    c.window_s = std::stod(parts[2].substr(0, parts[2].size() - 1));
  } catch (const std::exception&) {
    throw Error("malformed window length in '" + std::string(key) + "'");
  }
  if (!(c.window_s > 0.0)) throw Error("window length must be positive in '" + std::string(key) + "'");
  c.combiner = parse_combiner(parts[3]);
  return c;
}

// ---- UTM -------------------------------------------------------------------------

std::size_t zero_crossings(std::span<const double> x) {
  std::size_t count = 0;
  int last = 0;
  for (double v : x) {
    const int s = (v > 0.0) - (v < 0.0);
    if (s == 0) continue;
    if (last != 0 && s != last) ++count;
    last = s;
  }
  return count;
}

std::size_t peak_count(std::span<const double> x) {
  std::size_t count = 0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) count += x[i] > x[i - 1] && x[i] > x[i + 1];
  return count;
}

double mean_teager(std::span<const double> x) {
  if (x.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) acc += x[i] * x[i] - x[i - 1] * x[i + 1];
  return acc / static_cast<double>(x.size() - 2);
}

double amplitude_entropy(std::span<const double> x) {
  constexpr std::size_t bins = 64;
  if (x.empty()) return 0.0;
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return 0.0;
  std::array<std::size_t, bins> hist{};
  for (double v : x) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
    hist[std::min(b, bins - 1)]++;
  }
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(x.size());
    h -= p * std::log2(p);
  }
  return h;
}

std::array<double, 9> utm_channel(std::span<const double> x) {
  if (x.empty()) throw Error("UTM: empty window");
  double energy = 0.0;
  for (double v : x) energy += v * v;
  return {stats::median(x),
          stats::quantile(x, 0.75) - stats::quantile(x, 0.25),
          stats::mad(x),
          static_cast<double>(peak_count(x)),
          static_cast<double>(zero_crossings(x)),
          mean_teager(x),
          energy,
          energy / static_cast<double>(x.size()),
          amplitude_entropy(x)};
}

// ---- spectral ----------------------------------------------------------------

std::optional<std::array<double, 5>> relative_band_power(std::span<const double> x, double fs) {
  const auto psd = dsp::welch(x, fs, 1.0);
  const auto bands = dsp::standard_bands(fs);
  std::array<double, 5> p{};
  double total = 0.0;
  for (std::size_t b = 0; b < 5; ++b) {
    p[b] = dsp::band_power(psd, bands[b].low, bands[b].high);
    total += p[b];
  }
  if (!(total > 0.0)) return std::nullopt;
  for (auto& v : p) v /= total;
  return p;
}

// ---- wavelets ------------------------------------------------------------------

std::vector<double> cwt_frequencies(double fs) {
  const double top = std::min(45.0, 0.9 * fs / 2.0);
  if (!(top > 1.0)) throw Error("CWT: sampling rate too low");
  std::vector<double> f(13);
  for (std::size_t k = 0; k < 13; ++k) f[k] = std::exp(std::log(top) * static_cast<double>(k) / 12.0);
  return f;
}

Matrix cwt_power(std::span<const double> x, double fs, std::span<const double> freqs) {
  constexpr double w0 = 6.0;
  const std::size_t n = x.size();
  const std::size_t len = dsp::next_pow2(2 * n);
  const auto spectrum = dsp::fft_real(x, len);
  Matrix out(freqs.size(), n);
  std::vector<cplx> buf(len);
  for (std::size_t s = 0; s < freqs.size(); ++s) {
    const double scale = w0 / (kTwoPi * freqs[s]);
    std::fill(buf.begin(), buf.end(), cplx{});
    for (std::size_t k = 1; k <= len / 2; ++k) {
      const double omega = kTwoPi * static_cast<double>(k) * fs / static_cast<double>(len);
      const double arg = scale * omega - w0;
      if (arg > 40.0) break;
      buf[k] = spectrum[k] * (2.0 * std::exp(-0.5 * arg * arg));
    }
    dsp::ifft(buf);
    auto row = out.row(s);
    for (std::size_t i = 0; i < n; ++i) row[i] = std::norm(buf[i]);
  }
  return out;
}

DwtDecomposition dwt_db4(std::span<const double> x, int levels) {
  if (levels < 1) throw Error("DWT: levels must be >= 1");
  if (x.size() < (std::size_t{1} << levels)) {
    throw Error("DWT: window of " + std::to_string(x.size()) + " samples too short for " +
                std::to_string(levels) + " levels");
  }
  DwtDecomposition out;
  std::vector<double> a(x.begin(), x.end());
  for (int level = 0; level < levels; ++level) {
    if (a.size() % 2 == 1) a.push_back(a.back());
    const std::size_t m = a.size(), half = m / 2;
    std::vector<double> approx(half, 0.0), detail(half, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
      for (std::size_t j = 0; j < kDb4.size(); ++j) {
        const double v = a[(2 * k + j) % m];
        approx[k] += kDb4[j] * v;
        detail[k] += ((j % 2 == 0) ? 1.0 : -1.0) * kDb4[kDb4.size() - 1 - j] * v;
      }
    }
    out.details.push_back(std::move(detail));
    a = std::move(approx);
  }
  out.approximation = std::move(a);
  return out;
}

// ---- Stockwell -----------------------------------------------------------------

StockwellBands stockwell_bands(std::span<const double> x, double fs) {
  const std::size_t n = x.size();
  if (static_cast<double>(n) < fs - 1e-9) throw Error("Stockwell: window shorter than 1 s");
  const auto spectrum = dsp::fft_real(x);
  const double df = fs / static_cast<double>(n);
  const auto bands = dsp::standard_bands(fs);
  const auto stride = static_cast<std::size_t>(std::max(1.0, std::ceil(0.5 / df - 1e-9)));
  const auto first = static_cast<std::size_t>(std::ceil(bands[0].low / df - 1e-9));

  std::array<std::vector<double>, 5> band_power;
  std::array<std::vector<double>, 5> voice_spread;
  for (auto& p : band_power) p.assign(n, 0.0);
  std::vector<cplx> buf(n);
  std::vector<double> power(n);
  for (std::size_t v = first; v < n / 2; v += stride) {
    const double f = static_cast<double>(v) * df;
    std::size_t b = 5;
    for (std::size_t k = 0; k < 5; ++k) {
      if (f >= bands[k].low - 1e-9 && f < bands[k].high - 1e-9) b = k;
    }
    if (b == 5) {
      if (f >= bands[4].high) break;
      continue;
    }
    // Gaussian voice window; terms below exp(-50) are dropped.
    const double nv = static_cast<double>(v);
    const double a = 2.0 * std::numbers::pi * std::numbers::pi / (nv * nv);
    const auto reach = std::min(static_cast<long>(n / 2), static_cast<long>(std::ceil(std::sqrt(50.0 / a))));
    std::fill(buf.begin(), buf.end(), cplx{});
    for (long shift = -reach; shift <= reach; ++shift) {
      const auto m = static_cast<std::size_t>((shift + static_cast<long>(n)) % static_cast<long>(n));
      const auto idx = static_cast<std::size_t>((shift + static_cast<long>(v) + static_cast<long>(n)) % static_cast<long>(n));
      buf[m] = spectrum[idx] * std::exp(-a * static_cast<double>(shift * shift));
    }
    dsp::ifft(buf);
    for (std::size_t t = 0; t < n; ++t) {
      power[t] = std::norm(buf[t]);
      band_power[b][t] += power[t];
    }
    voice_spread[b].push_back(std::sqrt(population_std(power)));
  }

  StockwellBands out;
  for (std::size_t b = 0; b < 5; ++b) {
    const auto& spread = voice_spread[b];
    out.mean_sqrt_std[b] = spread.empty() ? 0.0 : stats::mean(spread);
    const auto& p = band_power[b];
    const double mean = stats::mean(p);
    double skew = 0.0;
    if (mean > 0.0 && population_std(p) > 1e-6 * mean) {
      skew = stats::skewness(p);
      if (!std::isfinite(skew)) skew = 0.0;
    }
    out.power_skewness[b] = skew;
  }
  return out;
}

// ---- connectivity --------------------------------------------------------------

std::optional<double> max_cross_correlation(std::span<const double> a, std::span<const double> b,
                                            std::size_t max_lag) {
  if (a.size() != b.size() || a.size() < 2) throw Error("cross-correlation: inputs must match in length");
  if (is_constant(a) || is_constant(b)) return std::nullopt;
  Matrix m(2, a.size());
  std::copy(a.begin(), a.end(), m.row(0).begin());
  std::copy(b.begin(), b.end(), m.row(1).begin());
  const auto r = LagCorrelator(m, max_lag).correlations(0, 1);
  return *std::max_element(r.begin(), r.end());
}

long best_lag(std::span<const double> a, std::span<const double> b, std::size_t max_lag) {
  Matrix m(2, a.size());
  std::copy(a.begin(), a.end(), m.row(0).begin());
  std::copy(b.begin(), b.end(), m.row(1).begin());
  const LagCorrelator corr(m, max_lag);
  const auto r = corr.correlations(0, 1);
  return static_cast<long>(std::max_element(r.begin(), r.end()) - r.begin()) -
         static_cast<long>(corr.max_lag);
}

Connectivity cc_matrix(const Matrix& window, double fs) {
  if (window.rows() < 2) throw Error("connectivity needs at least two channels");
  const LagCorrelator corr(window, static_cast<std::size_t>(std::llround(0.25 * fs)));
  Connectivity out{Matrix(window.rows(), window.rows()), 0};
  for (std::size_t i = 0; i < window.rows(); ++i) {
    for (std::size_t j = i + 1; j < window.rows(); ++j) {
      if (corr.constant[i] || corr.constant[j]) {
        ++out.flagged_pairs;
        continue;
      }
      const auto r = corr.correlations(i, j);
      out.values(i, j) = out.values(j, i) = *std::max_element(r.begin(), r.end());
    }
  }
  return out;
}

std::array<Connectivity, 5> plv_matrices(const Matrix& window, double fs) {
  const std::size_t c = window.rows();
  if (c < 2) throw Error("connectivity needs at least two channels");
  const std::size_t trim = window.cols() / 10;
  std::vector<bool> constant(c);
  for (std::size_t i = 0; i < c; ++i) constant[i] = is_constant(window.row(i));
  const auto bands = dsp::standard_bands(fs);
  std::array<Connectivity, 5> out;
  for (std::size_t b = 0; b < 5; ++b) {
    out[b] = {Matrix(c, c), 0};
    const auto u = unit_phasors(window, fs, bands[b], trim);
    const double len = static_cast<double>(u[0].size());
    for (std::size_t i = 0; i < c; ++i) {
      for (std::size_t j = i + 1; j < c; ++j) {
        if (constant[i] || constant[j]) {
          ++out[b].flagged_pairs;
          continue;
        }
        cplx acc{};
        for (std::size_t t = 0; t < u[i].size(); ++t) acc += u[i][t] * std::conj(u[j][t]);
        out[b].values(i, j) = out[b].values(j, i) = std::min(1.0, std::abs(acc) / len);
      }
    }
  }
  return out;
}

// ---- dispatch --------------------------------------------------------------------

std::vector<Extraction> extract(std::span<const Family> families, const Matrix& window, double fs) {
  std::optional<Connectivity> cc;
  std::optional<std::array<Connectivity, 5>> plv;
  std::optional<std::vector<StockwellBands>> st;
  const std::size_t channels = window.rows();
  std::vector<Extraction> out;
  for (Family f : families) {
    Extraction e;
    auto& v = e.values;
    switch (f) {
      case Family::UTM:
        for (std::size_t c = 0; c < channels; ++c) {
          const auto s = utm_channel(window.row(c));
          v.insert(v.end(), s.begin(), s.end());
        }
        break;
      case Family::Spectral:
        for (std::size_t c = 0; c < channels; ++c) {
          const auto p = relative_band_power(window.row(c), fs);
          if (!p) ++e.flags;
          const auto vals = p.value_or(std::array<double, 5>{0.2, 0.2, 0.2, 0.2, 0.2});
          v.insert(v.end(), vals.begin(), vals.end());
        }
        break;
      case Family::CWT: {
        const auto freqs = cwt_frequencies(fs);
        for (std::size_t c = 0; c < channels; ++c) {
          const Matrix p = cwt_power(window.row(c), fs, freqs);
          for (std::size_t s = 0; s < freqs.size(); ++s) {
            v.push_back(stats::mean(p.row(s)));
            v.push_back(population_std(p.row(s)));
          }
        }
        break;
      }
      case Family::DWT:
        for (std::size_t c = 0; c < channels; ++c) {
          const auto d = dwt_db4(window.row(c), 6);
          for (const auto& level : d.details) {
            std::vector<double> sq(level.size());
            std::transform(level.begin(), level.end(), sq.begin(), [](double x) { return x * x; });
            v.push_back(stats::mean(sq));
            v.push_back(population_std(sq));
          }
        }
        break;
      case Family::mST:
      case Family::sST:
        if (!st) {
          st.emplace();
          for (std::size_t c = 0; c < channels; ++c) st->push_back(stockwell_bands(window.row(c), fs));
        }
        for (const auto& s : *st) {
          const auto& vals = f == Family::mST ? s.mean_sqrt_std : s.power_skewness;
          v.insert(v.end(), vals.begin(), vals.end());
        }
        break;
      case Family::CC:
      case Family::GCC:
        if (!cc) cc = cc_matrix(window, fs);
        e.flags = cc->flagged_pairs;
        v = f == Family::CC ? upper_triangle(cc->values) : graph::compute(cc->values).flatten();
        break;
      case Family::PLV:
      case Family::GPLV:
        if (!plv) plv = plv_matrices(window, fs);
        for (const auto& m : *plv) {
          e.flags += m.flagged_pairs;
          const auto vals = f == Family::PLV ? upper_triangle(m.values) : graph::compute(m.values).flatten();
          v.insert(v.end(), vals.begin(), vals.end());
        }
        break;
    }
    out.push_back(std::move(e));
  }
  return out;
}

Extraction extract(Family family, const Matrix& window, double fs) {
  const std::array<Family, 1> one{family};
  return std::move(extract(one, window, fs).front());
}

std::vector<std::string> feature_names(Family family, const std::vector<std::string>& channels,
                                       double fs) {
  const std::string fam(to_string(family));
  const auto bands = dsp::standard_bands(fs);
  std::vector<std::string> out;
  auto graph_names = [&](const std::string& prefix) {
    for (const auto& ch : channels) {
      for (auto m : graph::kNodalNames) out.push_back(prefix + ch + "." + std::string(m));
    }
    for (auto m : graph::kGlobalNames) out.push_back(prefix + "global." + std::string(m));
  };
  auto pair_names = [&](const std::string& prefix) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      for (std::size_t j = i + 1; j < channels.size(); ++j) {
        out.push_back(prefix + pair_name(channels[i], channels[j]));
      }
    }
  };
  switch (family) {
    case Family::UTM:
      for (const auto& ch : channels) {
        for (auto s : kUtmNames) out.push_back(fam + "." + ch + "." + std::string(s));
      }
      break;
    case Family::Spectral:
    case Family::mST:
    case Family::sST:
      for (const auto& ch : channels) {
        for (const auto& b : bands) out.push_back(fam + "." + ch + "." + std::string(b.name));
      }
      break;
    case Family::CWT:
      for (const auto& ch : channels) {
        for (int s = 1; s <= 13; ++s) {
          out.push_back(fam + "." + ch + ".s" + std::to_string(s) + ".mean");
          out.push_back(fam + "." + ch + ".s" + std::to_string(s) + ".std");
        }
      }
      break;
    case Family::DWT:
      for (const auto& ch : channels) {
        for (int l = 1; l <= 6; ++l) {
          out.push_back(fam + "." + ch + ".d" + std::to_string(l) + ".mean");
          out.push_back(fam + "." + ch + ".d" + std::to_string(l) + ".std");
        }
      }
      break;
    case Family::CC:
      pair_names(fam + ".");
      break;
    case Family::PLV:
      for (const auto& b : bands) pair_names(fam + "." + std::string(b.name) + ".");
      break;
    case Family::GCC:
      graph_names(fam + ".");
      break;
    case Family::GPLV:
      for (const auto& b : bands) graph_names(fam + "." + std::string(b.name) + ".");
      break;
  }
  return out;
}

std::vector<double> combine(const std::vector<std::vector<double>>& windows, Combiner c) {
  if (windows.empty()) return {};
  const std::size_t d = windows.front().size();
  const std::size_t n = windows.size();
  std::vector<double> out(d, kNaN), col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t w = 0; w < n; ++w) col[w] = windows[w].at(j);
    switch (c) {
      case Combiner::Mean: out[j] = stats::mean(col); break;
      case Combiner::Median: out[j] = stats::median(col); break;
      case Combiner::Std: out[j] = n >= 2 ? stats::stddev(col, 1) : kNaN; break;
      case Combiner::Skewness: out[j] = n >= 3 ? stats::skewness(col) : kNaN; break;
      case Combiner::Kurtosis: out[j] = n >= 4 ? stats::excess_kurtosis(col) : kNaN; break;
    }
  }
  return out;
}

// ---- matrices --------------------------------------------------------------------

namespace {

struct SubjectFeatures {
  bool usable = false;
  std::vector<std::string> channels;
  // family index -> per-window vectors
  std::map<Family, std::vector<std::vector<double>>> per_window;
  std::string warning;
};

}  // namespace

std::vector<FeatureMatrix> build_feature_matrices(const std::vector<Recording>& recordings,
                                                  SegmentKind segment,
                                                  const std::vector<FeatureConfig>& configs,
                                                  std::vector<std::string>* warnings,
                                                  const BuildOptions& opts) {
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };

  // First recording per subject, in first-seen order, that has the segment.
  std::vector<const Recording*> subjects;
  {
    std::set<std::string> seen;
    for (const auto& rec : recordings) {
      if (!seen.insert(rec.subject_id).second) continue;
      if (rec.segment(segment) == nullptr) {
        warn(rec.subject_id + ": no " + std::string(to_string(segment)) + " segment, subject dropped");
        continue;
      }
      subjects.push_back(&rec);
    }
  }

  std::vector<FeatureMatrix> out(configs.size());
  for (std::size_t k = 0; k < configs.size(); ++k) {
    out[k].config = configs[k];
    out[k].segment = segment;
  }

  // Group configs sharing montage and window length.
  std::map<std::pair<preprocess::MontageKind, double>, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    groups[{configs[k].montage, configs[k].window_s}].push_back(k);
  }

  for (const auto& [key, members] : groups) {
    const auto [montage_kind, window_s] = key;
    std::vector<Family> families;
    for (auto k : members) {
      if (std::find(families.begin(), families.end(), configs[k].family) == families.end()) {
        families.push_back(configs[k].family);
      }
    }
    std::vector<SubjectFeatures> results(subjects.size());
    parallel_for(subjects.size(), opts.threads, [&](std::size_t s) {
      const Recording& rec = *subjects[s];
      SubjectFeatures& r = results[s];
      preprocess::Montage montage;
      try {
        montage = preprocess::build_montage(montage_kind, rec.channels);
      } catch (const Error& e) {
        r.warning = rec.subject_id + ": " + e.what() + ", subject dropped";
        return;
      }
      r.channels = montage.names;
      r.usable = true;
      for (Family f : families) r.per_window[f];
      std::vector<SampleSpan> spans;
      try {
        const auto wlen = static_cast<std::size_t>(std::llround(window_s * rec.fs));
        spans = preprocess::window_spans(rec.segment(segment)->span, wlen, rec.rejected);
      } catch (const Error& e) {
        r.warning = rec.subject_id + ": " + e.what() + ", features undefined";
        return;
      }
      if (spans.empty()) r.warning = rec.subject_id + ": every window rejected, features undefined";
      for (const auto& span : spans) {
        const Matrix w = preprocess::apply_montage(rec.data.col_slice(span.begin, span.end), montage);
        auto ex = extract(families, w, rec.fs);
        for (std::size_t i = 0; i < families.size(); ++i) {
          r.per_window[families[i]].push_back(std::move(ex[i].values));
        }
      }
    });

    // Reference layout from the first usable subject.
    const SubjectFeatures* ref = nullptr;
    double ref_fs = 0.0;
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      if (results[s].usable) {
        ref = &results[s];
        ref_fs = subjects[s]->fs;
        break;
      }
    }
    std::vector<std::size_t> rows;
    for (std::size_t s = 0; s < subjects.size(); ++s) {
      if (!results[s].warning.empty()) warn(results[s].warning);
      if (!results[s].usable) continue;
      if (results[s].channels != ref->channels || subjects[s]->fs != ref_fs) {
        warn(subjects[s]->subject_id + ": montage channels or rate differ from the cohort, subject dropped");
        continue;
      }
      rows.push_back(s);
    }

    for (auto k : members) {
      FeatureMatrix& fm = out[k];
      if (ref == nullptr) continue;
      fm.feature_names = feature_names(configs[k].family, ref->channels, ref_fs);
      const std::size_t d = fm.feature_names.size();
      fm.X = Matrix(rows.size(), d, kNaN);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const Recording& rec = *subjects[rows[i]];
        fm.subject_ids.push_back(rec.subject_id);
        fm.labels.push_back(rec.label);
        fm.ied_free.push_back(rec.ied_free);
        const auto& wins = results[rows[i]].per_window.at(configs[k].family);
        if (wins.empty()) continue;
        const auto v = combine(wins, configs[k].combiner);
        if (v.size() != d) throw Error("feature layout mismatch for " + configs[k].key());
        std::copy(v.begin(), v.end(), fm.X.row(i).begin());
      }
    }
  }
  return out;
}

FeatureMatrix build_feature_matrix(const std::vector<Recording>& recordings,
                                   const FeatureConfig& config, SegmentKind segment,
                                   std::vector<std::string>* warnings) {
  return std::move(build_feature_matrices(recordings, segment, {config}, warnings).front());
}

}  // namespace stimeeg::features
