#include "stimeeg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "stimeeg/dsp.hpp"
#include "stimeeg/edf.hpp"

namespace stimeeg::synth {

namespace {

using dsp::cplx;

// White Gaussian noise shaped by |H(f)| in the frequency domain, scaled to `rms`.
std::vector<double> shaped_noise(std::size_t n, double fs, double rms, std::mt19937_64& rng,
                                 const std::function<double(double)>& gain) {
  const std::size_t m = dsp::next_pow2(n);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<cplx> spec(m);
  for (auto& v : spec) v = g(rng);
  dsp::fft(spec);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t kk = std::min(k, m - k);
    spec[k] *= gain(static_cast<double>(kk) * fs / static_cast<double>(m));
  }
  dsp::ifft(spec);
  std::vector<double> out(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = spec[i].real();
    ss += out[i] * out[i];
  }
  const double scale = ss > 0.0 ? rms / std::sqrt(ss / static_cast<double>(n)) : 0.0;
  for (auto& v : out) v *= scale;
  return out;
}

std::vector<double> band_noise(std::size_t n, double fs, double rms, std::mt19937_64& rng, double lo, double hi) {
  return shaped_noise(n, fs, rms, rng, [=](double f) { return f >= lo && f <= hi ? 1.0 : 0.0; });
}

// Posterior weighting of the alpha rhythm and the photic response.
double posterior_weight(std::string_view ch) {
  if (ch == "O1" || ch == "O2") return 1.0;
  if (ch == "P3" || ch == "P4" || ch == "Pz" || ch == "T5" || ch == "T6") return 0.5;
  return 0.2;
}

double frontal_weight(std::string_view ch) {
  if (ch.starts_with("Fp") || ch.starts_with("F")) return 1.0;
  if (ch.starts_with("C") || ch.starts_with("T3") || ch.starts_with("T4")) return 0.7;
  return 0.4;
}

std::size_t samples(double seconds, double fs) { return static_cast<std::size_t>(std::llround(seconds * fs)); }

}  // namespace

void SynthSpec::validate() const {
  if (n_per_class == 0) throw Error("synth: n_per_class must be positive");
  if (fs < 50.0) throw Error("synth: fs must be at least 50 Hz to carry the 21 Hz sweep");
  for (double v : {resting_s, train_s, hv_s}) {
    if (!(v > 0.0)) throw Error("synth: segment durations must be positive");
  }
  for (double v : {train_gap_s, pad_s, background_uv, alpha_uv, white_uv, modulation_depth, photic_driving_gain,
                   hv_slowing_gain, hv_arousal_gain, plv_coupling_gain}) {
    if (!(v >= 0.0)) throw Error("synth: gains, amplitudes and gaps must be non-negative");
  }
  if (!(trigger_level > 0.0)) throw Error("synth: trigger_level must be positive");
}

std::vector<double> sweep_frequencies() {
  std::vector<double> f;
  for (int k = 1; k <= 21; k += 2) f.push_back(k);
  return f;
}

Subject gen_subject(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  const double fs = spec.fs;
  const bool epileptic = index % 2 == 0;
  std::mt19937_64 rng(derive_seed(spec.seed, index));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const auto freqs = sweep_frequencies();
  const std::size_t ips0 = samples(spec.resting_s + spec.pad_s, fs);
  const std::size_t train_n = samples(spec.train_s, fs);
  const std::size_t stride = samples(spec.train_s + spec.train_gap_s, fs);
  const std::size_t ips1 = ips0 + (freqs.size() - 1) * stride + train_n;
  const std::size_t hv0 = ips1 + samples(spec.pad_s, fs);
  const std::size_t hv1 = hv0 + samples(spec.hv_s, fs);
  const std::size_t n = hv1 + samples(spec.pad_s, fs);

  Subject out;
  out.hv_slowing = epileptic && spec.hv_slowing_gain > 0.0;
  Recording& rec = out.recording;
  char id[32];
  std::snprintf(id, sizeof id, "sub%03zu", index + 1);
  rec.subject_id = id;
  rec.fs = fs;
  rec.label = epileptic ? Label::Epileptic : Label::NonEpileptic;
  rec.channels.assign(kTenTwenty.begin(), kTenTwenty.end());
  rec.data = Matrix(rec.channels.size(), n);

  // Photic trigger and trains.
  out.photic.assign(n, 0.0);
  const std::size_t width = samples(0.01, fs) + 1;
  for (std::size_t k = 0; k < freqs.size(); ++k) {
    const std::size_t b = ips0 + k * stride;
    out.trains.push_back({b, b + train_n, freqs[k]});
    for (double t = 0.0; t < spec.train_s - 1e-9; t += 1.0 / freqs[k]) {
      const std::size_t s = b + samples(t, fs);
      for (std::size_t i = s; i < std::min(b + train_n, s + width); ++i) out.photic[i] = spec.trigger_level;
    }
  }

  // HV envelope: 0 before HV, quadratic rise across it, held after.
  std::vector<double> ramp(n, 0.0);
  for (std::size_t i = hv0; i < n; ++i) {
    const double u = std::min(1.0, static_cast<double>(i - hv0) / static_cast<double>(hv1 - hv0));
    ramp[i] = u * u;
  }

  const double alpha_scale = 0.8 + 0.4 * unif(rng);
  const auto alpha = band_noise(n, fs, spec.alpha_uv * alpha_scale, rng, 8.5, 11.5);
  // Slow shared amplitude fluctuation of the ongoing activity.
  auto modulation = band_noise(n, fs, 1.0, rng, 0.05, 0.5);
  for (auto& m : modulation) m = std::exp(spec.modulation_depth * m);
  std::vector<double> theta_src, delta_src, coupling;
  if (out.hv_slowing) {
    theta_src = band_noise(n, fs, spec.alpha_uv, rng, 4.5, 7.5);
    delta_src = band_noise(n, fs, spec.alpha_uv, rng, 1.5, 3.5);
  }
  if (epileptic && spec.plv_coupling_gain > 0.0) {
    coupling = band_noise(n, fs, spec.plv_coupling_gain * spec.alpha_uv, rng, 4.5, 7.5);
  }
  std::vector<double> driving_phase(freqs.size());
  for (auto& p : driving_phase) p = 2.0 * std::numbers::pi * unif(rng);

  for (std::size_t c = 0; c < rec.channels.size(); ++c) {
    const auto& ch = rec.channels[c];
    const double wp = posterior_weight(ch), wf = frontal_weight(ch);
    const auto bg = shaped_noise(n, fs, spec.background_uv, rng, [](double f) { return f < 0.5 ? 0.0 : 1.0 / std::sqrt(f); });
    std::normal_distribution<double> white(0.0, spec.white_uv);
    auto row = rec.data.row(c);
    for (std::size_t i = 0; i < n; ++i) {
      double a = wp * alpha[i];
      if (out.hv_slowing) {
        a /= 1.0 + spec.hv_slowing_gain * ramp[i];
      } else {
        a *= 1.0 + spec.hv_arousal_gain * ramp[i];
      }
      double v = modulation[i] * (bg[i] + a) + white(rng);
      if (out.hv_slowing) v += spec.hv_slowing_gain * ramp[i] * wf * (theta_src[i] + delta_src[i]);
      if (!coupling.empty()) v += coupling[i];
      row[i] = v;
    }
    if (epileptic && spec.photic_driving_gain > 0.0) {
      const double amp = std::sqrt(spec.photic_driving_gain) * spec.alpha_uv * std::numbers::sqrt2 * wp;
      for (std::size_t k = 0; k < freqs.size(); ++k) {
        const auto& t = out.trains[k];
        for (std::size_t i = t.start_sample; i < t.end_sample; ++i) {
          const double time = static_cast<double>(i - t.start_sample) / fs;
          row[i] += amp * std::sin(2.0 * std::numbers::pi * freqs[k] * time + driving_phase[k]);
        }
      }
    }
  }

  rec = ingest::locate_segments(std::move(rec), out.trains, SampleSpan{hv0, hv1});
  rec.validate();
  out.sidecar.subject_id = rec.subject_id;
  out.sidecar.label = rec.label;
  out.sidecar.ied_free = true;
  out.sidecar.hv_start_s = static_cast<double>(hv0) / fs;
  out.sidecar.hv_end_s = static_cast<double>(hv1) / fs;
  return out;
}

std::vector<Subject> gen_cohort(const SynthSpec& spec) {
  spec.validate();
  std::vector<Subject> out;
  for (std::size_t i = 0; i < 2 * spec.n_per_class; ++i) out.push_back(gen_subject(spec, i));
  return out;
}

void write_cohort(const std::vector<Subject>& cohort, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& s : cohort) {
    const auto& rec = s.recording;
    std::vector<edf::SignalData> signals;
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
      const auto row = rec.data.row(c);
      signals.push_back({"EEG " + rec.channels[c] + "-REF", "uV", rec.fs, {row.begin(), row.end()}});
    }
    signals.push_back({"Photic", "uV", rec.fs, s.photic});
    const auto base = dir / rec.subject_id;
    edf::write_file(base.string() + ".edf", signals);
    std::ofstream meta(base.string() + ".meta");
    if (!meta) throw Error("synth: cannot write " + base.string() + ".meta");
    meta << ingest::format_sidecar(s.sidecar);
  }
}

}  // namespace stimeeg::synth
