#include <doctest.h>

#include <cmath>

#include "stimeeg/dsp.hpp"
#include "stimeeg/stats.hpp"
#include "test_util.hpp"

using namespace stimeeg;
using testutil::kPi;

namespace {
double db(std::complex<double> h) { return 20.0 * std::log10(std::abs(h)); }
}  // namespace

TEST_CASE("butterworth highpass magnitude matches the analytic response") {
  const double fs = 200.0;
  const auto f = dsp::butter_highpass(4, 1.0, fs);
  CHECK(f.sections.size() == 2);
  // |H|^2 = 1 / (1 + (tan(pi fc/fs) / tan(pi f/fs))^(2n)) for the bilinear design.
  for (double freq : {0.3, 1.0, 2.0, 10.0, 50.0}) {
    const double ratio = std::tan(kPi * 1.0 / fs) / std::tan(kPi * freq / fs);
    const double expected = 1.0 / std::sqrt(1.0 + std::pow(ratio, 8));
    CHECK(std::abs(f.response(freq, fs)) == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("butterworth lowpass and bandpass gains") {
  const double fs = 250.0;
  const auto lp = dsp::butter_lowpass(4, 30.0, fs);
  CHECK(std::abs(lp.response(0.0, fs)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(lp.response(30.0, fs)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));

  const auto bp = dsp::butter_bandpass(4, 8.0, 13.0, fs);
  CHECK(bp.sections.size() == 4);
  CHECK(std::abs(bp.response(8.0, fs)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
  CHECK(std::abs(bp.response(13.0, fs)) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
  CHECK(db(bp.response(10.2, fs)) > -0.1);
  CHECK(db(bp.response(2.0, fs)) < -60.0);
  CHECK(std::abs(bp.response(0.0, fs)) < 1e-9);
}

TEST_CASE("notch response") {
  for (double fs : {200.0, 250.0, 500.0}) {
    for (double f0 : {50.0, 60.0}) {
      const auto n = dsp::iir_notch(f0, 30.0, fs);
      // Two passes (forward-backward) square the magnitude.
      CHECK(2.0 * db(n.response(f0, fs)) < -40.0);
      CHECK(2.0 * db(n.response(f0 - 10.0, fs)) > -1.0);
      CHECK(2.0 * db(n.response(f0 + 10.0, fs)) > -1.0);
    }
  }
}

TEST_CASE("filtfilt has zero phase and keeps constants with a unity-DC filter") {
  const double fs = 200.0;
  const auto lp = dsp::butter_lowpass(4, 20.0, fs);
  std::vector<double> pulse(1001, 0.0);
  for (int i = -20; i <= 20; ++i) pulse[500 + i] = std::exp(-0.01 * i * i);
  const auto y = dsp::filtfilt(lp, pulse);
  for (std::size_t i = 0; i < 500; ++i) CHECK(y[500 - i] == doctest::Approx(y[500 + i]).epsilon(1e-9));

  std::vector<double> c(400, 3.5);
  for (double v : dsp::filtfilt(lp, c)) CHECK(v == doctest::Approx(3.5).epsilon(1e-9));
}

TEST_CASE("welch recovers the power of a sine") {
  const double fs = 200.0;
  const auto x = testutil::sine(20 * 200, 10.0, fs, 2.0);
  const auto psd = dsp::welch(x, fs);
  CHECK(psd.df == doctest::Approx(1.0));
  // A^2 / 2 for a sinusoid.
  CHECK(dsp::band_power(psd, 8.0, 13.0) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("analytic signal of a cosine has constant envelope") {
  const double fs = 100.0;
  const auto x = testutil::sine(1000, 5.0, fs, 1.0, kPi / 2.0);
  const auto z = dsp::analytic_signal(x);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(z[i]) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fft round trip and agreement with the naive DFT") {
  const auto x = testutil::white_noise(37, 1.0, 3);
  auto spec = dsp::fft_real(x);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::abs(spec[k]) == doctest::Approx(testutil::dft_magnitude(x, double(k))).epsilon(1e-9));
  }
  dsp::ifft(spec);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(spec[i].real() == doctest::Approx(x[i]).epsilon(1e-12));
}

TEST_CASE("standard bands cap gamma below Nyquist") {
  CHECK(dsp::standard_bands(200.0)[4].high == 45.0);
  CHECK(dsp::standard_bands(64.0)[4].high == doctest::Approx(28.8));
}

TEST_CASE("bias-corrected moments") {
  std::vector<double> v{1.0, 2.0, 3.0};
  CHECK(stats::mean(v) == 2.0);
  CHECK(stats::median(v) == 2.0);
  CHECK(stats::stddev(v) == doctest::Approx(1.0));
  std::vector<double> sym{-1.0, 0.0, 1.0};
  CHECK(stats::skewness(sym) == doctest::Approx(0.0));
  std::vector<double> same{4.0, 4.0, 4.0, 4.0};
  CHECK(std::isnan(stats::skewness(same)));
  CHECK(std::isnan(stats::excess_kurtosis(same)));
  // Reference values from scipy.stats (bias=False).
  std::vector<double> w{1.0, 2.0, 2.0, 3.0, 9.0};
  CHECK(stats::skewness(w) == doctest::Approx(1.96936017623879).epsilon(1e-12));
  CHECK(stats::excess_kurtosis(w) == doctest::Approx(4.06918653973042).epsilon(1e-12));
}
