#include "stimeeg/hvresponse.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stimeeg/dsp.hpp"
#include "stimeeg/preprocess.hpp"

namespace stimeeg::hv {

namespace {

struct BandPowers {
  double delta = 0.0, theta = 0.0, alpha = 0.0;
};

// Mean absolute band power over the channels of one epoch.
BandPowers epoch_power(const Matrix& car, SampleSpan span, double fs) {
  const auto bands = dsp::standard_bands(fs);
  BandPowers out;
  for (std::size_t c = 0; c < car.rows(); ++c) {
    const auto psd = dsp::welch(car.row(c).subspan(span.begin, span.size()), fs, 1.0);
    out.delta += dsp::band_power(psd, bands[0].low, bands[0].high);
    out.theta += dsp::band_power(psd, bands[1].low, bands[1].high);
    out.alpha += dsp::band_power(psd, bands[2].low, bands[2].high);
  }
  const double n = static_cast<double>(car.rows());
  return {out.delta / n, out.theta / n, out.alpha / n};
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

}  // namespace

SampleSpan EpochPlan::epoch(std::size_t i) const {
  const std::size_t b = trimmed.begin + i * epoch_samples;
  return {b, b + epoch_samples};
}

EpochPlan plan_epochs(SampleSpan hv, double fs, const EpochConfig& cfg) {
  if (!(fs > 0.0)) throw Error("hv: sampling rate must be positive");
  if (!(cfg.epoch_s > 0.0) || cfg.trim_fraction < 0.0 || cfg.trim_fraction >= 0.5) {
    throw Error("hv: invalid epoch configuration");
  }
  EpochPlan p;
  const auto trim = static_cast<std::size_t>(std::llround(cfg.trim_fraction * static_cast<double>(hv.size())));
  p.trimmed = {hv.begin + trim, hv.end - trim};
  p.epoch_samples = static_cast<std::size_t>(std::llround(cfg.epoch_s * fs));
  p.n_epochs = p.trimmed.size() / p.epoch_samples;
  p.baseline_count = std::min(cfg.baseline_epochs, p.n_epochs);
  if (p.n_epochs == 0) return p;
  const auto center = static_cast<long>(std::lround(cfg.sample_center * static_cast<double>(p.n_epochs)));
  const long half = static_cast<long>(cfg.sample_epochs / 2);
  long first = center - half;
  long last = center - half + static_cast<long>(cfg.sample_epochs) - 1;
  first = std::max<long>(first, static_cast<long>(p.baseline_count));
  last = std::min<long>(last, static_cast<long>(p.n_epochs) - 1);
  if (last >= first) {
    p.sample_first = static_cast<std::size_t>(first);
    p.sample_count = static_cast<std::size_t>(last - first + 1);
  }
  return p;
}

std::optional<double> percent_change(double baseline, double sample) {
  if (!(baseline > 0.0)) return std::nullopt;
  return 100.0 * (sample - baseline) / baseline;
}

double slowing_index(double d_delta, double d_theta, double d_alpha) { return -d_alpha + d_theta + d_delta; }

SubjectSlowing analyze(const Recording& rec, const EpochConfig& cfg) {
  SubjectSlowing out;
  out.subject_id = rec.subject_id;
  out.label = rec.label;
  const Segment* seg = rec.segment(SegmentKind::HV);
  if (!seg) {
    out.note = "no HV segment";
    return out;
  }
  const auto plan = plan_epochs(seg->span, rec.fs, cfg);
  const Matrix car = preprocess::apply_montage(rec.data, preprocess::build_montage(preprocess::MontageKind::CAR, rec.channels));

  auto clean = [&](std::size_t i) {
    const auto e = plan.epoch(i);
    return std::none_of(rec.rejected.begin(), rec.rejected.end(), [&](const SampleSpan& r) { return r.overlaps(e); });
  };
  auto window = [&](std::size_t first, std::size_t count, std::size_t& used) {
    BandPowers sum;
    used = 0;
    for (std::size_t i = first; i < first + count; ++i) {
      if (!clean(i)) continue;
      const auto p = epoch_power(car, plan.epoch(i), rec.fs);
      sum.delta += p.delta;
      sum.theta += p.theta;
      sum.alpha += p.alpha;
      ++used;
    }
    if (used > 0) {
      const double n = static_cast<double>(used);
      sum = {sum.delta / n, sum.theta / n, sum.alpha / n};
    }
    return sum;
  };
  const auto base = window(plan.baseline_first, plan.baseline_count, out.baseline_epochs);
  const auto samp = window(plan.sample_first, plan.sample_count, out.sample_epochs);
  if (out.baseline_epochs < cfg.min_epochs || out.sample_epochs < cfg.min_epochs) {
    out.note = "fewer than " + std::to_string(cfg.min_epochs) + " epochs in a window";
    return out;
  }
  const auto dd = percent_change(base.delta, samp.delta);
  const auto dt = percent_change(base.theta, samp.theta);
  const auto da = percent_change(base.alpha, samp.alpha);
  if (!dd || !dt || !da) {
    out.note = "zero baseline power";
    return out;
  }
  out.d_delta = *dd;
  out.d_theta = *dt;
  out.d_alpha = *da;
  out.s = slowing_index(*dd, *dt, *da);
  out.valid = true;
  return out;
}

SlowingReport stratify(std::vector<SubjectSlowing> subjects) {
  SlowingReport r;
  std::vector<double> s;
  for (const auto& x : subjects) {
    if (x.valid) s.push_back(x.s);
  }
  if (!s.empty()) {
    for (double v : s) r.mean += v;
    r.mean /= static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(s.size()));
  }
  r.z_defined = s.size() >= 2 && r.std > 1e-12 * std::max(1.0, std::abs(r.mean));
  for (auto& x : subjects) {
    x.responder = x.valid && x.s > 0.0;
    x.z.reset();
    if (x.valid && r.z_defined) x.z = (x.s - r.mean) / r.std;
  }
  r.subjects = std::move(subjects);
  return r;
}

std::string SlowingReport::to_csv() const {
  std::ostringstream o;
  o << "subject,label,valid,baseline_epochs,sample_epochs,d_delta,d_theta,d_alpha,S,z,responder,note\n";
  for (const auto& x : subjects) {
    o << x.subject_id << ',' << (x.label ? std::string(to_string(*x.label)) : "") << ',' << (x.valid ? 1 : 0) << ','
      << x.baseline_epochs << ',' << x.sample_epochs << ',';
    if (x.valid) {
      o << fmt(x.d_delta) << ',' << fmt(x.d_theta) << ',' << fmt(x.d_alpha) << ',' << fmt(x.s) << ',';
    } else {
      o << ",,,,";
    }
    o << (x.z ? fmt(*x.z) : "") << ',' << (x.responder ? 1 : 0) << ',' << x.note << '\n';
  }
  return o.str();
}

nlohmann::json SlowingReport::to_json() const {
  nlohmann::json j;
  j["mean_S"] = mean;
  j["std_S"] = std;
  j["z_defined"] = z_defined;
  auto& arr = j["subjects"] = nlohmann::json::array();
  for (const auto& x : subjects) {
    nlohmann::json s{{"subject", x.subject_id}, {"valid", x.valid}, {"responder", x.responder},
                     {"baseline_epochs", x.baseline_epochs}, {"sample_epochs", x.sample_epochs}};
    if (x.label) s["label"] = std::string(to_string(*x.label));
    if (x.valid) {
      s["d_delta"] = x.d_delta;
      s["d_theta"] = x.d_theta;
      s["d_alpha"] = x.d_alpha;
      s["S"] = x.s;
    }
    if (x.z) s["z"] = *x.z;
    if (!x.note.empty()) s["note"] = x.note;
    arr.push_back(s);
  }
  return j;
}

}  // namespace stimeeg::hv
