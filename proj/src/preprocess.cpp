#include "stimeeg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "stimeeg/dsp.hpp"
#include "stimeeg/stats.hpp"

namespace stimeeg::preprocess {

namespace {

template <typename F>
Matrix per_channel(const Matrix& in, F&& f) {
  Matrix out(in.rows(), in.cols());
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto y = f(in.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

std::int64_t integer_rate(double fs) {
  const double r = std::round(fs);
  if (!(fs > 0.0) || std::abs(fs - r) > 1e-9) {
    throw Error("resampling needs integer-valued rates, got " + std::to_string(fs));
  }
  return static_cast<std::int64_t>(r);
}

std::vector<double> kaiser_lowpass(std::size_t half, double cutoff_norm, double gain) {
  // cutoff_norm is the cutoff as a fraction of the sampling rate.
  constexpr double beta = 8.0;
  const std::size_t n = 2 * half + 1;
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  std::vector<double> h(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) - static_cast<double>(half);
    const double arg = 2.0 * cutoff_norm * t;
    const double sinc = t == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
    const double r = t / static_cast<double>(half);
    const double win = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    h[k] = gain * 2.0 * cutoff_norm * sinc * win;
  }
  return h;
}

std::size_t to_rate(std::size_t sample, double ratio, bool round_up) {
  const double v = static_cast<double>(sample) * ratio;
  return static_cast<std::size_t>(round_up ? std::ceil(v - 1e-9) : std::floor(v + 1e-9));
}

const std::map<std::string_view, std::vector<std::string_view>>& neighbor_table() {
  static const std::map<std::string_view, std::vector<std::string_view>> table = {
      {"Fp1", {"Fp2", "F7", "F3"}},        {"Fp2", {"Fp1", "F4", "F8"}},
      {"F7", {"Fp1", "F3", "T3"}},         {"F3", {"Fp1", "F7", "Fz", "C3"}},
      {"Fz", {"F3", "F4", "Cz"}},          {"F4", {"Fp2", "Fz", "F8", "C4"}},
      {"F8", {"Fp2", "F4", "T4"}},         {"T3", {"F7", "C3", "T5"}},
      {"C3", {"F3", "P3", "Cz", "T3"}},    {"Cz", {"Fz", "C3", "C4", "Pz"}},
      {"C4", {"F4", "Cz", "T4", "P4"}},    {"T4", {"F8", "C4", "T6"}},
      {"T5", {"T3", "P3", "O1"}},          {"P3", {"C3", "T5", "Pz", "O1"}},
      {"Pz", {"Cz", "P3", "P4"}},          {"P4", {"C4", "Pz", "T6", "O2"}},
      {"T6", {"T4", "P4", "O2"}},          {"O1", {"T5", "P3", "O2"}},
      {"O2", {"T6", "P4", "O1"}},
  };
  return table;
}

}  // namespace

void PreprocessConfig::validate() const {
  if (!(notch_hz > 0.0 && highpass_hz > 0.0 && target_fs > 0.0 && rms_window_s > 0.0)) {
    throw Error("preprocess: all rates must be positive");
  }
  if (!(highpass_hz < notch_hz)) throw Error("preprocess: high-pass cutoff must be below the notch");
  if (highpass_order < 1) throw Error("preprocess: high-pass order must be >= 1");
  if (!(rms_mad_k > 0.0) || rms_mad_floor < 0.0) throw Error("preprocess: invalid RMS rule parameters");
  if (!(notch_q > 0.0)) throw Error("preprocess: notch quality factor must be positive");
}

Matrix notch_filter(const Matrix& signal, double fs, double notch_hz, double q) {
  if (!(fs > 2.0 * notch_hz)) throw Error("notch: sampling rate must exceed twice the notch frequency");
  const auto f = dsp::iir_notch(notch_hz, q, fs);
  return per_channel(signal, [&](std::span<const double> x) { return dsp::filtfilt(f, x); });
}

Matrix highpass_zero_phase(const Matrix& signal, double fs, double cutoff_hz, int order) {
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) {
    throw Error("high-pass: cutoff must lie in (0, fs/2)");
  }
  const auto f = dsp::butter_highpass(order, cutoff_hz, fs);
  return per_channel(signal, [&](std::span<const double> x) { return dsp::filtfilt(f, x); });
}

std::size_t RejectionResult::rejected_count() const {
  return static_cast<std::size_t>(std::count(rejected.begin(), rejected.end(), true));
}

RejectionResult rms_artifact_reject(const Matrix& signal, double fs, const PreprocessConfig& cfg) {
  RejectionResult out;
  out.window_samples = static_cast<std::size_t>(std::llround(cfg.rms_window_s * fs));
  if (out.window_samples == 0 || signal.cols() < out.window_samples) {
    throw Error("artifact rejection: signal shorter than one RMS window");
  }
  const std::size_t nwin = signal.cols() / out.window_samples;
  out.rms = Matrix(signal.rows(), nwin);
  out.rejected.assign(nwin, false);
  for (std::size_t c = 0; c < signal.rows(); ++c) {
    const auto x = signal.row(c);
    auto rms = out.rms.row(c);
    for (std::size_t w = 0; w < nwin; ++w) {
      double ss = 0.0;
      for (std::size_t i = w * out.window_samples; i < (w + 1) * out.window_samples; ++i) ss += x[i] * x[i];
      rms[w] = std::sqrt(ss / static_cast<double>(out.window_samples));
    }
    const double med = stats::median(rms);
    const double spread = std::max(stats::mad(rms), cfg.rms_mad_floor * med);
    const double threshold = med + cfg.rms_mad_k * spread;
    for (std::size_t w = 0; w < nwin; ++w) {
      if (rms[w] > threshold || rms[w] > cfg.rms_abs_uv) out.rejected[w] = true;
    }
  }
  for (std::size_t w = 0; w < nwin; ++w) {
    const SampleSpan span{w * out.window_samples, (w + 1) * out.window_samples};
    auto& dst = out.rejected[w] ? out.rejected_spans : out.kept;
    if (!dst.empty() && dst.back().end == span.begin) {
      dst.back().end = span.end;
    } else {
      dst.push_back(span);
    }
  }
  return out;
}

std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out) {
  const auto in = integer_rate(fs_in);
  const auto out = integer_rate(fs_out);
  if (out > in) throw Error("resample: output rate above input rate");
  if (out == in) return {x.begin(), x.end()};
  const auto g = std::gcd(in, out);
  const auto up = static_cast<std::size_t>(out / g);
  const auto down = static_cast<std::size_t>(in / g);
  const std::size_t half = 32 * std::max(up, down);
  const double fs_up = static_cast<double>(up) * fs_in;
  const auto h = kaiser_lowpass(half, 0.9 * (fs_out / 2.0) / fs_up, static_cast<double>(up));

  const std::size_t n_up = x.size() * up;
  const std::size_t n_out = (x.size() * up + down - 1) / down;
  std::vector<double> y(n_out, 0.0);
  for (std::size_t m = 0; m < n_out; ++m) {
    const std::size_t t = m * down + half;
    double acc = 0.0;
    for (std::size_t k = t % up; k < h.size() && k <= t; k += up) {
      const std::size_t j = t - k;
      if (j < n_up) acc += h[k] * x[j / up];
    }
    y[m] = acc;
  }
  return y;
}

Matrix resample(const Matrix& signal, double fs_in, double fs_out) {
  if (signal.rows() == 0) return signal;
  const auto first = resample(signal.row(0), fs_in, fs_out);
  Matrix out(signal.rows(), first.size());
  std::copy(first.begin(), first.end(), out.row(0).begin());
  for (std::size_t r = 1; r < signal.rows(); ++r) {
    const auto y = resample(signal.row(r), fs_in, fs_out);
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return out;
}

std::string_view to_string(MontageKind kind) {
  switch (kind) {
    case MontageKind::CAR: return "CAR";
    case MontageKind::Cz: return "Cz";
    case MontageKind::Laplacian: return "Laplacian";
    case MontageKind::BipolarDB: return "BipolarDB";
  }
  return "?";
}

MontageKind parse_montage(std::string_view text) {
  for (auto k : {MontageKind::CAR, MontageKind::Cz, MontageKind::Laplacian, MontageKind::BipolarDB}) {
    if (text == to_string(k)) return k;
  }
  throw Error("unknown montage '" + std::string(text) + "'");
}

const std::vector<std::string_view>& laplacian_neighbors(std::string_view electrode) {
  const auto& table = neighbor_table();
  auto it = table.find(electrode);
  if (it == table.end()) throw Error("no Laplacian neighbours for '" + std::string(electrode) + "'");
  return it->second;
}

const std::vector<std::pair<std::string_view, std::string_view>>& double_banana() {
  static const std::vector<std::pair<std::string_view, std::string_view>> pairs = {
      {"Fp1", "F7"}, {"F7", "T3"}, {"T3", "T5"}, {"T5", "O1"}, {"Fp1", "F3"}, {"F3", "C3"},
      {"C3", "P3"},  {"P3", "O1"}, {"Fz", "Cz"}, {"Cz", "Pz"}, {"Fp2", "F4"}, {"F4", "C4"},
      {"C4", "P4"},  {"P4", "O2"}, {"Fp2", "F8"}, {"F8", "T4"}, {"T4", "T6"}, {"T6", "O2"}};
  return pairs;
}

Montage build_montage(MontageKind kind, const std::vector<std::string>& channels) {
  const std::size_t n = channels.size();
  auto index = [&](std::string_view name) -> std::size_t {
    auto it = std::find(channels.begin(), channels.end(), name);
    if (it == channels.end()) {
      throw Error(std::string(to_string(kind)) + " montage: missing channel " + std::string(name));
    }
    return static_cast<std::size_t>(it - channels.begin());
  };
  auto find = [&](std::string_view name) -> std::optional<std::size_t> {
    auto it = std::find(channels.begin(), channels.end(), name);
    if (it == channels.end()) return std::nullopt;
    return static_cast<std::size_t>(it - channels.begin());
  };

  Montage m{kind, {}, {}};
  switch (kind) {
    case MontageKind::CAR: {
      if (n < 2) throw Error("CAR montage: needs at least two channels");
      m.matrix = Matrix(n, n, -1.0 / static_cast<double>(n));
      for (std::size_t i = 0; i < n; ++i) {
        m.matrix(i, i) += 1.0;
        m.names.push_back(channels[i]);
      }
      break;
    }
    case MontageKind::Cz: {
      const std::size_t cz = index("Cz");
      m.matrix = Matrix(n - 1, n);
      std::size_t r = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (i == cz) continue;
        m.matrix(r, i) = 1.0;
        m.matrix(r, cz) = -1.0;
        m.names.push_back(channels[i] + "-Cz");
        ++r;
      }
      break;
    }
    case MontageKind::Laplacian: {
      m.matrix = Matrix(n, n);
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> nb;
        for (auto name : laplacian_neighbors(channels[i])) {
          if (auto j = find(name)) nb.push_back(*j);
        }
        if (nb.empty()) {
          throw Error("Laplacian montage: missing channel " +
                      std::string(laplacian_neighbors(channels[i]).front()) + " (no neighbour of " +
                      channels[i] + ")");
        }
        m.matrix(i, i) = 1.0;
        for (auto j : nb) m.matrix(i, j) -= 1.0 / static_cast<double>(nb.size());
        m.names.push_back(channels[i] + "-lap");
      }
      break;
    }
    case MontageKind::BipolarDB: {
      const auto& pairs = double_banana();
      m.matrix = Matrix(pairs.size(), n);
      for (std::size_t r = 0; r < pairs.size(); ++r) {
        m.matrix(r, index(pairs[r].first)) = 1.0;
        m.matrix(r, index(pairs[r].second)) = -1.0;
        m.names.push_back(std::string(pairs[r].first) + "-" + std::string(pairs[r].second));
      }
      break;
    }
  }
  return m;
}

Matrix apply_montage(const Matrix& data, const Montage& montage) {
  if (montage.matrix.cols() != data.rows()) throw Error("montage: channel count mismatch");
  return montage.matrix.matmul(data);
}

std::vector<SampleSpan> window_spans(SampleSpan segment, std::size_t window_samples,
                                     std::span<const SampleSpan> rejected) {
  if (window_samples == 0 || segment.size() < window_samples) throw Error("segment too short");
  std::vector<SampleSpan> out;
  for (std::size_t b = segment.begin; b + window_samples <= segment.end; b += window_samples) {
    const SampleSpan w{b, b + window_samples};
    const bool clean = std::none_of(rejected.begin(), rejected.end(),
                                    [&](const SampleSpan& r) { return r.overlaps(w); });
    if (clean) out.push_back(w);
  }
  return out;
}

WindowedSegment window_segment(const Recording& rec, SegmentKind kind, const Montage& montage,
                               double window_length_s) {
  const Segment* seg = rec.segment(kind);
  if (seg == nullptr) throw Error(rec.subject_id + ": no " + std::string(to_string(kind)) + " segment");
  const auto wlen = static_cast<std::size_t>(std::llround(window_length_s * rec.fs));
  const auto spans = window_spans(seg->span, wlen, rec.rejected);

  WindowedSegment out{montage.kind, kind, window_length_s, rec.fs, montage.names, {}};
  out.windows.reserve(spans.size());
  for (const auto& s : spans) {
    out.windows.push_back(apply_montage(rec.data.col_slice(s.begin, s.end), montage));
  }
  return out;
}

Preprocessed run(const Recording& raw, const PreprocessConfig& cfg) {
  cfg.validate();
  if (cfg.target_fs > raw.fs + 1e-9) throw Error(raw.subject_id + ": target rate above source rate");

  Matrix x = notch_filter(raw.data, raw.fs, cfg.notch_hz, cfg.notch_q);
  x = highpass_zero_phase(x, raw.fs, cfg.highpass_hz, cfg.highpass_order);
  Preprocessed out;
  out.rejection = rms_artifact_reject(x, raw.fs, cfg);

  Recording& rec = out.recording;
  rec.subject_id = raw.subject_id;
  rec.channels = raw.channels;
  rec.label = raw.label;
  rec.ied_free = raw.ied_free;
  rec.fs = cfg.target_fs;
  rec.data = resample(x, raw.fs, cfg.target_fs);

  const double ratio = cfg.target_fs / raw.fs;
  const std::size_t n = rec.samples();
  for (const auto& s : out.rejection.rejected_spans) {
    rec.rejected.push_back({to_rate(s.begin, ratio, false), std::min(n, to_rate(s.end, ratio, true))});
  }
  for (const auto& s : raw.segments) {
    const SampleSpan span{std::min(n, to_rate(s.span.begin, ratio, true)),
                          std::min(n, to_rate(s.span.end, ratio, false))};
    if (span.size() > 0) rec.segments.push_back({s.kind, span});
  }
  return out;
}

}  // namespace stimeeg::preprocess
