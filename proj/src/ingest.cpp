#include "stimeeg/ingest.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stimeeg/dsp.hpp"
#include "stimeeg/stats.hpp"

namespace stimeeg::ingest {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

struct Alias {
  std::string_view from;
  std::string_view to;
};

// Modern (10-10) names mapped onto their legacy 10-20 equivalents.
constexpr std::array<Alias, 4> kAliases = {
    {{"T7", "T3"}, {"T8", "T4"}, {"P7", "T5"}, {"P8", "T6"}}};

}  // namespace

std::optional<std::string> normalize_label(std::string_view raw) {
  std::string s = upper(trim(raw));
  for (std::string_view prefix : {"EEG ", "EEG-", "EEG_"}) {
    if (s.starts_with(prefix)) {
      s = trim(s.substr(prefix.size()));
      break;
    }
  }
  s = s.substr(0, s.find_first_of("- _:"));
  for (const auto& a : kAliases) {
    if (s == a.from) s = a.to;
  }
  for (auto name : kTenTwenty) {
    if (upper(name) == s) return std::string(name);
  }
  return std::nullopt;
}

bool is_photic_label(std::string_view raw) { return upper(raw).find("PHOTIC") != std::string::npos; }

double microvolt_scale(std::string_view dimension) {
  const std::string d = trim(dimension);
  if (d == "uV" || d == "UV" || d == "uv" || d == "\xC2\xB5V" || d == "\xCE\xBCV") return 1.0;
  if (d == "mV" || d == "mv") return 1000.0;
  throw Error("unknown unit '" + d + "'");
}

ChannelSelection select_channels(const edf::File& file, std::string subject_id) {
  ChannelSelection out;
  std::array<std::optional<std::size_t>, kTenTwenty.size()> source{};
  for (std::size_t i = 0; i < file.header.n_signals(); ++i) {
    const auto& sig = file.header.signals[i];
    if (is_photic_label(sig.label)) {
      if (!out.photic) {
        out.photic = TriggerChannel{sig.label, file.header.sampling_rate(i), file.signals[i]};
      }
      continue;
    }
    const auto name = normalize_label(sig.label);
    if (!name) {
      out.discarded.push_back(sig.label);
      continue;
    }
    auto& slot = source[*ten_twenty_index(*name)];
    if (slot) {
      out.discarded.push_back(sig.label);
    } else {
      slot = i;
    }
  }

  Recording& rec = out.recording;
  rec.subject_id = subject_id.empty() ? file.header.patient_id : std::move(subject_id);
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < kTenTwenty.size(); ++k) {
    if (!source[k]) continue;
    picked.push_back(*source[k]);
    rec.channels.emplace_back(kTenTwenty[k]);
  }
  if (picked.size() < 2) {
    throw Error(rec.subject_id + ": insufficient montage coverage (" +
                std::to_string(picked.size()) + " 10-20 channels)");
  }

  rec.fs = file.header.sampling_rate(picked.front());
  std::size_t n = file.signals[picked.front()].size();
  for (auto i : picked) {
    if (std::abs(file.header.sampling_rate(i) - rec.fs) > 1e-9) {
      throw Error(rec.subject_id + ": mixed sampling rates across 10-20 channels");
    }
    n = std::min(n, file.signals[i].size());
  }
  rec.data = Matrix(picked.size(), n);
  for (std::size_t r = 0; r < picked.size(); ++r) {
    const auto& sig = file.header.signals[picked[r]];
    const double scale = microvolt_scale(sig.physical_dimension);
    const auto& src = file.signals[picked[r]];
    auto dst = rec.data.row(r);
    for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] * scale;
  }
  return out;
}

std::vector<PhoticTrain> detect_ips_trains(std::span<const double> photic, double fs,
                                           const TrainDetectorConfig& cfg) {
  if (fs < 50.0) throw Error("trigger channel rate below 50 Hz cannot resolve a 21 Hz sweep");
  const auto win = static_cast<std::size_t>(std::llround(cfg.window_s * fs));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.hop_s * fs)));
  if (photic.size() < win) return {};

  const auto window = dsp::hann(win);
  const double df = fs / static_cast<double>(win);
  const auto k_lo = static_cast<std::size_t>(std::ceil(cfg.min_freq_hz / df));
  const auto k_hi = std::min(win / 2, static_cast<std::size_t>(std::floor(cfg.max_freq_hz / df)));

  std::vector<std::size_t> starts;
  std::vector<double> peaks;
  std::vector<double> all;
  std::vector<dsp::cplx> buf(win);
  for (std::size_t s = 0; s + win <= photic.size(); s += hop) {
    double mu = 0.0;
    for (std::size_t i = 0; i < win; ++i) mu += photic[s + i];
    mu /= static_cast<double>(win);
    for (std::size_t i = 0; i < win; ++i) buf[i] = (photic[s + i] - mu) * window[i];
    dsp::fft(buf);
    double peak = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
      const double m = std::abs(buf[k]);
      peak = std::max(peak, m);
      all.push_back(m);
    }
    starts.push_back(s);
    peaks.push_back(peak);
  }
  const double global_peak = *std::max_element(peaks.begin(), peaks.end());
  if (!(global_peak > 0.0)) return {};
  const double threshold = std::max(cfg.median_factor * stats::median(all), 1e-3 * global_peak);

  // Runs of active frames, bridging short inactive gaps.
  std::vector<std::pair<std::size_t, std::size_t>> runs;  // frame index range, inclusive
  for (std::size_t f = 0; f < peaks.size(); ++f) {
    if (!(peaks[f] > threshold)) continue;
    if (!runs.empty() && f - runs.back().second <= cfg.max_gap_frames + 1) {
      runs.back().second = f;
    } else {
      runs.emplace_back(f, f);
    }
  }

  const double baseline = stats::median(photic);
  std::vector<PhoticTrain> trains;
  for (const auto& [f0, f1] : runs) {
    const std::size_t lo = starts[f0];
    const std::size_t hi = std::min(photic.size(), starts[f1] + win);
    double dev_max = 0.0;
    for (std::size_t i = lo; i < hi; ++i) dev_max = std::max(dev_max, std::abs(photic[i] - baseline));
    const double dev_thr = 0.1 * dev_max;
    std::size_t first = hi, last = lo;
    for (std::size_t i = lo; i < hi; ++i) {
      if (std::abs(photic[i] - baseline) > dev_thr) {
        first = std::min(first, i);
        last = i;
      }
    }
    if (first >= hi) continue;

    // Dominant frequency: lowest strong local maximum of the zero-padded
    // spectrum of the whole burst (resolves the fundamental of a pulse train
    // whose harmonics have similar magnitude).
    const std::size_t len = last + 1 - first;
    const std::size_t nfft = dsp::next_pow2(std::max<std::size_t>(len, static_cast<std::size_t>(10.0 * fs)));
    const auto w = dsp::hann(len);
    double mu = 0.0;
    for (std::size_t i = 0; i < len; ++i) mu += photic[first + i];
    mu /= static_cast<double>(len);
    std::vector<dsp::cplx> spec(nfft);
    for (std::size_t i = 0; i < len; ++i) spec[i] = (photic[first + i] - mu) * w[i];
    dsp::fft(spec);
    const double bin = fs / static_cast<double>(nfft);
    const auto b_lo = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.min_freq_hz / bin)));
    const auto b_hi = std::min(nfft / 2 - 1, static_cast<std::size_t>(std::floor(cfg.max_freq_hz / bin)));
    std::vector<double> mag(nfft / 2 + 1);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(spec[k]);
    double mmax = 0.0;
    for (std::size_t k = b_lo; k <= b_hi; ++k) mmax = std::max(mmax, mag[k]);
    if (!(mmax > 0.0)) continue;
    std::size_t pick = b_lo;
    for (std::size_t k = b_lo; k <= b_hi; ++k) {
      if (mag[k] >= 0.5 * mmax && mag[k] > mag[k - 1] && mag[k] >= mag[k + 1]) {
        pick = k;
        break;
      }
    }
    double offset = 0.0;
    const double denom = mag[pick - 1] - 2.0 * mag[pick] + mag[pick + 1];
    if (denom < 0.0) offset = 0.5 * (mag[pick - 1] - mag[pick + 1]) / denom;
    const double freq = std::clamp((static_cast<double>(pick) + offset) * bin, 1.0, 30.0);
    trains.push_back({first, last + 1, freq});
  }
  return trains;
}

std::vector<PhoticTrain> rescale_trains(const std::vector<PhoticTrain>& trains, double from_fs,
                                        double to_fs) {
  std::vector<PhoticTrain> out = trains;
  const double r = to_fs / from_fs;
  for (auto& t : out) {
    t.start_sample = static_cast<std::size_t>(std::floor(static_cast<double>(t.start_sample) * r));
    t.end_sample = std::max(t.start_sample + 1,
                            static_cast<std::size_t>(std::ceil(static_cast<double>(t.end_sample) * r)));
  }
  return out;
}

Recording locate_segments(Recording rec, const std::vector<PhoticTrain>& trains,
                          std::optional<SampleSpan> hv) {
  const std::size_t n = rec.samples();
  rec.segments.clear();
  std::vector<SampleSpan> stimulus;
  if (!trains.empty()) {
    SampleSpan ips{trains.front().start_sample, trains.front().end_sample};
    for (const auto& t : trains) {
      ips.begin = std::min(ips.begin, t.start_sample);
      ips.end = std::max(ips.end, t.end_sample);
    }
    ips.end = std::min(ips.end, n);
    if (ips.begin >= ips.end) throw Error(rec.subject_id + ": photic trains outside the recording");
    rec.segments.push_back({SegmentKind::IPS, ips});
    stimulus.push_back(ips);
  }
  if (hv) {
    if (hv->begin >= hv->end || hv->end > n) {
      throw Error(rec.subject_id + ": HV annotation [" + std::to_string(hv->begin) + ", " +
                  std::to_string(hv->end) + ") outside the recording");
    }
    if (!stimulus.empty() && stimulus.front().overlaps(*hv)) {
      const auto& ips = stimulus.front();
      throw Error(rec.subject_id + ": HV annotation [" + std::to_string(hv->begin) + ", " +
                  std::to_string(hv->end) + ") overlaps IPS [" + std::to_string(ips.begin) +
                  ", " + std::to_string(ips.end) + ")");
    }
    rec.segments.push_back({SegmentKind::HV, *hv});
    stimulus.push_back(*hv);
  }

  std::sort(stimulus.begin(), stimulus.end(),
            [](const SampleSpan& a, const SampleSpan& b) { return a.begin < b.begin; });
  SampleSpan best{};
  std::size_t cursor = 0;
  for (const auto& s : stimulus) {
    if (s.begin > cursor && s.begin - cursor > best.size()) best = {cursor, s.begin};
    cursor = std::max(cursor, s.end);
  }
  if (n > cursor && n - cursor > best.size()) best = {cursor, n};
  if (best.size() > 0) rec.segments.push_back({SegmentKind::Resting, best});

  std::sort(rec.segments.begin(), rec.segments.end(),
            [](const Segment& a, const Segment& b) { return a.span.begin < b.span.begin; });
  return rec;
}

Sidecar parse_sidecar(std::string_view text) {
  Sidecar sc;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto parse_double = [&](const std::string& v, const std::string& key) {
    double d = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), d);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw Error("sidecar line " + std::to_string(lineno) + ": '" + key + "' is not a number");
    }
    return d;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("sidecar line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "subject_id") {
      sc.subject_id = value;
    } else if (key == "label") {
      sc.label = parse_label(value);
    } else if (key == "ied_free") {
      if (value != "true" && value != "false") {
        throw Error("sidecar line " + std::to_string(lineno) + ": ied_free must be true or false");
      }
      sc.ied_free = value == "true";
    } else if (key == "hv_start_s") {
      sc.hv_start_s = parse_double(value, key);
    } else if (key == "hv_end_s") {
      sc.hv_end_s = parse_double(value, key);
    } else {
      throw Error("sidecar line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  if (sc.hv_start_s.has_value() != sc.hv_end_s.has_value()) {
    throw Error("sidecar: hv_start_s and hv_end_s must be given together");
  }
  return sc;
}

std::string format_sidecar(const Sidecar& sc) {
  std::ostringstream out;
  out << "subject_id = " << sc.subject_id << '\n';
  if (sc.label) out << "label = " << to_string(*sc.label) << '\n';
  out << "ied_free = " << (sc.ied_free ? "true" : "false") << '\n';
  if (sc.hv_start_s && sc.hv_end_s) {
    out.precision(17);
    out << "hv_start_s = " << *sc.hv_start_s << '\n' << "hv_end_s = " << *sc.hv_end_s << '\n';
  }
  return out.str();
}

Sidecar read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open sidecar " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_sidecar(ss.str());
}

std::filesystem::path sidecar_path(const std::filesystem::path& edf_path) {
  auto p = edf_path;
  p.replace_extension(".meta");
  return p;
}

IngestResult ingest(const edf::File& file, const Sidecar& sidecar) {
  IngestResult out;
  auto sel = select_channels(file, sidecar.subject_id);
  out.discarded_channels = std::move(sel.discarded);
  Recording rec = std::move(sel.recording);
  if (sel.photic) {
    out.has_photic_channel = true;
    const auto trains = detect_ips_trains(sel.photic->samples, sel.photic->fs);
    out.trains = rescale_trains(trains, sel.photic->fs, rec.fs);
  }
  std::optional<SampleSpan> hv;
  if (sidecar.hv_start_s && sidecar.hv_end_s) {
    const auto b = static_cast<std::size_t>(std::llround(std::max(0.0, *sidecar.hv_start_s) * rec.fs));
    const auto e = static_cast<std::size_t>(std::llround(std::max(0.0, *sidecar.hv_end_s) * rec.fs));
    hv = SampleSpan{b, e};
  }
  out.recording = locate_segments(std::move(rec), out.trains, hv);
  out.recording.label = sidecar.label;
  out.recording.ied_free = sidecar.ied_free;
  out.recording.validate();
  return out;
}

IngestResult ingest_file(const std::filesystem::path& edf_path) {
  const auto sc_path = sidecar_path(edf_path);
  Sidecar sc;
  if (std::filesystem::exists(sc_path)) sc = read_sidecar(sc_path);
  if (sc.subject_id.empty()) sc.subject_id = edf_path.stem().string();
  return ingest(edf::read_file(edf_path), sc);
}

}  // namespace stimeeg::ingest
