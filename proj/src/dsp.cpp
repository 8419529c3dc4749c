#include "stimeeg/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include "stimeeg/core.hpp"

namespace stimeeg::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

// FFTW planning is not thread-safe; execution with the new-array interface is.
class PlanCache {
 public:
  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(std::size_t n, int sign) {
    std::lock_guard lock(mu_);
    auto key = std::make_pair(n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cplx> scratch(n);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw Error("fftw: planning failed");
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mu_;
  std::map<std::pair<std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void execute(std::vector<cplx>& data, int sign) {
  if (data.empty()) return;
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_cache().get(data.size(), sign), buf, buf);
}

struct Zpk {
  std::vector<cplx> zeros;
  std::vector<cplx> poles;
  double gain = 1.0;
};

Zpk butter_prototype(int order) {
  Zpk z;
  for (int m = -order + 1; m < order; m += 2) {
    z.poles.push_back(-std::exp(cplx(0.0, kPi * m / (2.0 * order))));
  }
  return z;
}

// Pre-warped analog frequency for a digital cutoff, using the fs = 2
// normalization of the bilinear transform below.
double warp(double cutoff_hz, double fs) {
  const double wn = cutoff_hz / (fs / 2.0);
  return 4.0 * std::tan(kPi * wn / 2.0);
}

cplx prod(const std::vector<cplx>& v, cplx offset, bool negate) {
  cplx p(1.0, 0.0);
  for (const auto& x : v) p *= negate ? (offset - x) : (offset + x);
  return p;
}

Zpk lp2lp(Zpk in, double wo) {
  const auto degree = static_cast<int>(in.poles.size() - in.zeros.size());
  for (auto& z : in.zeros) z *= wo;
  for (auto& p : in.poles) p *= wo;
  in.gain *= std::pow(wo, degree);
  return in;
}

Zpk lp2hp(const Zpk& in, double wo) {
  const auto degree = in.poles.size() - in.zeros.size();
  Zpk out;
  for (const auto& z : in.zeros) out.zeros.push_back(wo / z);
  for (const auto& p : in.poles) out.poles.push_back(wo / p);
  out.zeros.insert(out.zeros.end(), degree, cplx(0.0, 0.0));
  out.gain = in.gain * std::real(prod(in.zeros, 0.0, true) / prod(in.poles, 0.0, true));
  return out;
}

Zpk lp2bp(const Zpk& in, double wo, double bw) {
  const auto degree = in.poles.size() - in.zeros.size();
  Zpk out;
  auto split = [&](cplx x, std::vector<cplx>& dst) {
    const cplx scaled = x * bw / 2.0;
    const cplx root = std::sqrt(scaled * scaled - wo * wo);
    dst.push_back(scaled + root);
    dst.push_back(scaled - root);
  };
  for (const auto& z : in.zeros) split(z, out.zeros);
  for (const auto& p : in.poles) split(p, out.poles);
  out.zeros.insert(out.zeros.end(), degree, cplx(0.0, 0.0));
  out.gain = in.gain * std::pow(bw, static_cast<double>(degree));
  return out;
}

Zpk bilinear(const Zpk& in) {
  constexpr double fs2 = 4.0;
  const auto degree = in.poles.size() - in.zeros.size();
  Zpk out;
  for (const auto& z : in.zeros) out.zeros.push_back((fs2 + z) / (fs2 - z));
  for (const auto& p : in.poles) out.poles.push_back((fs2 + p) / (fs2 - p));
  out.zeros.insert(out.zeros.end(), degree, cplx(-1.0, 0.0));
  out.gain = in.gain * std::real(prod(in.zeros, fs2, true) / prod(in.poles, fs2, true));
  return out;
}

// Pairs complex-conjugate poles into biquads. Zeros are assumed real (as they
// are for Butterworth and notch designs) and are consumed two per section in
// the order given.
SosFilter to_sos(const Zpk& zpk) {
  std::vector<cplx> upper;
  std::vector<double> real_poles;
  for (const auto& p : zpk.poles) {
    if (std::abs(p.imag()) < 1e-12) {
      real_poles.push_back(p.real());
    } else if (p.imag() > 0) {
      upper.push_back(p);
    }
  }
  std::sort(upper.begin(), upper.end(),
            [](cplx a, cplx b) { return std::abs(a) < std::abs(b); });

  std::vector<double> zeros;
  for (const auto& z : zpk.zeros) zeros.push_back(z.real());

  std::vector<std::array<double, 2>> dens;
  for (const auto& p : upper) dens.push_back({-2.0 * p.real(), std::norm(p)});
  for (std::size_t i = 0; i < real_poles.size(); i += 2) {
    if (i + 1 < real_poles.size()) {
      dens.push_back({-(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]});
    } else {
      dens.push_back({-real_poles[i], 0.0});
    }
  }

  SosFilter f;
  std::size_t zi = 0;
  for (const auto& d : dens) {
    Biquad s{1.0, 0.0, 0.0, d[0], d[1]};
    const bool second_order = d[1] != 0.0;
    if (zi < zeros.size()) {
      const double z1 = zeros[zi++];
      if (second_order && zi < zeros.size()) {
        const double z2 = zeros[zi++];
        s.b1 = -(z1 + z2);
        s.b2 = z1 * z2;
      } else {
        s.b1 = -z1;
      }
    }
    f.sections.push_back(s);
  }
  if (f.sections.empty()) throw Error("filter design produced no sections");
  auto& first = f.sections.front();
  first.b0 *= zpk.gain;
  first.b1 *= zpk.gain;
  first.b2 *= zpk.gain;
  return f;
}

void check_cutoff(double cutoff_hz, double fs) {
  if (!(fs > 0.0) || !(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0)) {
    throw Error("filter cutoff must satisfy 0 < cutoff < fs/2");
  }
}

// Steady-state section states for a unit step input (direct form II transposed).
std::vector<std::array<double, 2>> step_states(const SosFilter& f) {
  std::vector<std::array<double, 2>> zi;
  double scale = 1.0;
  for (const auto& s : f.sections) {
    const double yss = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * yss;
    const double z1 = s.b1 - s.a1 * yss + z2;
    zi.push_back({z1 * scale, z2 * scale});
    scale *= yss;
  }
  return zi;
}

void run_sections(const SosFilter& f, std::vector<double>& x,
                  std::vector<std::array<double, 2>> state) {
  for (std::size_t k = 0; k < f.sections.size(); ++k) {
    const auto& s = f.sections[k];
    double z1 = state[k][0];
    double z2 = state[k][1];
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

void fft(std::vector<cplx>& data) { execute(data, FFTW_FORWARD); }

void ifft(std::vector<cplx>& data) {
  execute(data, FFTW_BACKWARD);
  const double inv = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= inv;
}

std::vector<cplx> fft_real(std::span<const double> x, std::size_t n) {
  if (n == 0) n = x.size();
  if (n < x.size()) throw Error("fft_real: transform shorter than input");
  std::vector<cplx> buf(n);
  std::copy(x.begin(), x.end(), buf.begin());
  fft(buf);
  return buf;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

cplx SosFilter::response(double freq_hz, double fs) const {
  const cplx z1 = std::exp(cplx(0.0, -2.0 * kPi * freq_hz / fs));
  const cplx z2 = z1 * z1;
  cplx h(1.0, 0.0);
  for (const auto& s : sections) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return h;
}

std::size_t SosFilter::effective_length() const {
  double rmax = 0.0;
  for (const auto& s : sections) {
    const double disc = s.a1 * s.a1 - 4.0 * s.a2;
    if (disc < 0.0) {
      rmax = std::max(rmax, std::sqrt(s.a2));
    } else {
      const double sq = std::sqrt(disc);
      rmax = std::max({rmax, std::abs((-s.a1 + sq) / 2.0), std::abs((-s.a1 - sq) / 2.0)});
    }
  }
  if (rmax <= 0.0) return 3;
  if (rmax >= 1.0) throw Error("unstable filter");
  return static_cast<std::size_t>(std::ceil(std::log(1e-6) / std::log(rmax))) + 1;
}

SosFilter butter_highpass(int order, double cutoff_hz, double fs) {
  check_cutoff(cutoff_hz, fs);
  return to_sos(bilinear(lp2hp(butter_prototype(order), warp(cutoff_hz, fs))));
}

SosFilter butter_lowpass(int order, double cutoff_hz, double fs) {
  check_cutoff(cutoff_hz, fs);
  return to_sos(bilinear(lp2lp(butter_prototype(order), warp(cutoff_hz, fs))));
}

SosFilter butter_bandpass(int order, double low_hz, double high_hz, double fs) {
  check_cutoff(low_hz, fs);
  check_cutoff(high_hz, fs);
  if (!(low_hz < high_hz)) throw Error("band-pass requires low < high");
  const double w1 = warp(low_hz, fs);
  const double w2 = warp(high_hz, fs);
  Zpk z = bilinear(lp2bp(butter_prototype(order), std::sqrt(w1 * w2), w2 - w1));
  // Interleave the zeros at +1 and -1 so every section gets one of each.
  std::vector<cplx> pos, neg;
  for (const auto& zero : z.zeros) (zero.real() > 0 ? pos : neg).push_back(zero);
  z.zeros.clear();
  for (std::size_t i = 0; i < std::max(pos.size(), neg.size()); ++i) {
    if (i < pos.size()) z.zeros.push_back(pos[i]);
    if (i < neg.size()) z.zeros.push_back(neg[i]);
  }
  return to_sos(z);
}

SosFilter iir_notch(double freq_hz, double q, double fs) {
  check_cutoff(freq_hz, fs);
  const double w0 = 2.0 * kPi * freq_hz / fs;
  const double bw = w0 / q;
  const double gain = 1.0 / (1.0 + std::tan(bw / 2.0));
  const double c = std::cos(w0);
  return SosFilter{{Biquad{gain, -2.0 * gain * c, gain, -2.0 * gain * c, 2.0 * gain - 1.0}}};
}

std::vector<double> sosfilt(const SosFilter& f, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  run_sections(f, y, std::vector<std::array<double, 2>>(f.sections.size(), {0.0, 0.0}));
  return y;
}

std::vector<double> filtfilt(const SosFilter& f, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (n == 1) return {x[0] * std::real(f.response(0.0, 1.0))};
  const std::size_t pad = std::min(3 * f.effective_length(), n - 1);

  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  const auto zi = step_states(f);
  auto scaled = [&](double v) {
    auto s = zi;
    for (auto& st : s) st = {st[0] * v, st[1] * v};
    return s;
  };

  run_sections(f, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sections(f, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

Psd welch(std::span<const double> x, double fs, double segment_s) {
  if (x.empty()) throw Error("welch: empty input");
  const auto nperseg =
      std::min(x.size(), static_cast<std::size_t>(std::llround(segment_s * fs)));
  const std::size_t step = std::max<std::size_t>(1, nperseg - nperseg / 2);
  const auto window = hann(nperseg);
  double wss = 0.0;
  for (double w : window) wss += w * w;

  const std::size_t nfreq = nperseg / 2 + 1;
  Psd psd;
  psd.df = fs / static_cast<double>(nperseg);
  psd.freqs.resize(nfreq);
  psd.power.assign(nfreq, 0.0);
  for (std::size_t k = 0; k < nfreq; ++k) psd.freqs[k] = static_cast<double>(k) * psd.df;

  std::size_t count = 0;
  std::vector<cplx> buf(nperseg);
  for (std::size_t start = 0; start + nperseg <= x.size(); start += step) {
    double mu = 0.0;
    for (std::size_t i = 0; i < nperseg; ++i) mu += x[start + i];
    mu /= static_cast<double>(nperseg);
    for (std::size_t i = 0; i < nperseg; ++i) buf[i] = (x[start + i] - mu) * window[i];
    fft(buf);
    for (std::size_t k = 0; k < nfreq; ++k) psd.power[k] += std::norm(buf[k]);
    ++count;
  }
  const double scale = 1.0 / (fs * wss * static_cast<double>(count));
  for (std::size_t k = 0; k < nfreq; ++k) {
    const bool edge = k == 0 || (nperseg % 2 == 0 && k == nfreq - 1);
    psd.power[k] *= scale * (edge ? 1.0 : 2.0);
  }
  return psd;
}

double band_power(const Psd& psd, double low_hz, double high_hz) {
  double sum = 0.0;
  for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
    const double f = psd.freqs[k];
    if (f >= low_hz - 1e-9 && f < high_hz - 1e-9) sum += psd.power[k];
  }
  return sum * psd.df;
}

std::vector<cplx> analytic_signal(std::span<const double> x) {
  const std::size_t n = x.size();
  auto spec = fft_real(x);
  if (n == 0) return spec;
  for (std::size_t k = 1; k < n; ++k) {
    if (2 * k < n) {
      spec[k] *= 2.0;
    } else if (2 * k > n) {
      spec[k] = 0.0;
    }
  }
  ifft(spec);
  return spec;
}

std::array<Band, 5> standard_bands(double fs) {
  const double gamma_high = std::min(45.0, 0.9 * fs / 2.0);
  return {{{"delta", 1.0, 4.0},
           {"theta", 4.0, 8.0},
           {"alpha", 8.0, 13.0},
           {"beta", 13.0, 30.0},
           {"gamma", 30.0, gamma_high}}};
}

}  // namespace stimeeg::dsp
