#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "stimeeg/dsp.hpp"
#include "stimeeg/preprocess.hpp"
#include "test_util.hpp"

using namespace stimeeg;
using namespace stimeeg::preprocess;

namespace {

Matrix one_row(const std::vector<double>& x) {
  Matrix m(1, x.size());
  std::copy(x.begin(), x.end(), m.row(0).begin());
  return m;
}

std::vector<double> as_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

std::vector<std::string> ten_twenty() {
  return {kTenTwenty.begin(), kTenTwenty.end()};
}

}  // namespace

TEST_CASE("notch removes the line frequency and keeps the passband") {
  const double fs = 200.0;
  const auto line = testutil::sine(4000, 50.0, fs, 20.0);
  const auto out = notch_filter(one_row(line), fs, 50.0);
  CHECK(testutil::rms(out.row(0), 400) <= 0.01 * testutil::rms(line, 400));

  const auto alpha = testutil::sine(4000, 10.0, fs, 20.0);
  const auto kept = notch_filter(one_row(alpha), fs, 50.0);
  CHECK(testutil::rms(kept.row(0), 400) == doctest::Approx(testutil::rms(alpha, 400)).epsilon(0.01));

  const auto zero = notch_filter(Matrix(2, 1000), fs, 50.0);
  CHECK(std::all_of(zero.data().begin(), zero.data().end(), [](double v) { return v == 0.0; }));

  CHECK_THROWS_AS(notch_filter(one_row(line), 100.0, 50.0), Error);
}

TEST_CASE("zero-phase high-pass removes offsets and slow drift") {
  const double fs = 200.0;
  const auto out = highpass_zero_phase(one_row(std::vector<double>(6000, 100.0)), fs, 1.0);
  double peak = 0.0;
  for (std::size_t i = 1000; i < 5000; ++i) peak = std::max(peak, std::abs(out(0, i)));
  CHECK(peak < 0.01);

  const auto drift = testutil::sine(40000, 0.1, fs, 50.0);
  const auto hp = highpass_zero_phase(one_row(drift), fs, 1.0);
  const double atten_db =
      20.0 * std::log10(testutil::rms(hp.row(0), 4000) / testutil::rms(drift, 4000));
  CHECK(atten_db <= -30.0);

  std::vector<double> pulse(2001, 0.0);
  for (int k = -20; k <= 20; ++k) pulse[1000 + k] = std::exp(-0.01 * k * k);
  const auto sym = highpass_zero_phase(one_row(pulse), fs, 1.0);
  for (std::size_t k = 1; k < 600; ++k) {
    CHECK(sym(0, 1000 - k) == doctest::Approx(sym(0, 1000 + k)).epsilon(1e-6).scale(1e-9));
  }

  CHECK_THROWS_AS(highpass_zero_phase(one_row(drift), fs, 100.0), Error);
}

TEST_CASE("high-pass output has a near-zero mean") {
  const double fs = 200.0;
  auto x = testutil::sine(20000, 10.0, fs, 30.0);
  for (auto& v : x) v += 250.0;
  const auto y = highpass_zero_phase(one_row(x), fs, 1.0);
  double mean = 0.0;
  for (double v : y.row(0)) mean += v;
  mean /= static_cast<double>(y.cols());
  CHECK(std::abs(mean) <= 1e-6 * 280.0 * 1000.0);  // whole-record mean, edges included
  double inner = 0.0;
  for (std::size_t i = 2000; i < 18000; ++i) inner += y(0, i);
  CHECK(std::abs(inner / 16000.0) <= 1e-6 * 280.0);
}

TEST_CASE("filtered band-limited noise peaks at zero lag") {
  const double fs = 200.0;
  const auto noise = testutil::white_noise(4000, 1.0, 11);
  const auto band = dsp::filtfilt(dsp::butter_bandpass(4, 5.0, 30.0, fs), noise);
  const auto out = highpass_zero_phase(notch_filter(one_row(band), fs, 50.0), fs, 1.0);
  int best_lag = 99;
  double best = -1.0;
  for (int lag = -20; lag <= 20; ++lag) {
    double acc = 0.0;
    for (int i = 200; i < 3800; ++i) acc += band[i] * out(0, i + lag);
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("RMS rejection flags exactly the window with a pop") {
  const double fs = 200.0;
  const std::size_t channels = 4, seconds = 60;
  Matrix x(channels, seconds * 200);
  for (std::size_t c = 0; c < channels; ++c) {
    const auto n = testutil::white_noise(x.cols(), 10.0, 100 + c);
    std::copy(n.begin(), n.end(), x.row(c).begin());
  }
  for (std::size_t i = 37 * 200 + 50; i < 37 * 200 + 60; ++i) x(2, i) += 5000.0;
  const auto r = rms_artifact_reject(x, fs, {});
  REQUIRE(r.rejected.size() == seconds);
  CHECK(r.rejected_count() == 1);
  CHECK(r.rejected[37]);
  REQUIRE(r.rejected_spans.size() == 1);
  CHECK(r.rejected_spans[0] == SampleSpan{37 * 200, 38 * 200});
  CHECK(r.kept.size() == 2);
}

TEST_CASE("RMS rejection on clean stationary noise") {
  const double fs = 200.0;
  std::size_t rejected = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Matrix x(19, 300 * 200);
    for (std::size_t c = 0; c < 19; ++c) {
      const auto n = testutil::white_noise(x.cols(), 10.0, seed * 100 + c);
      std::copy(n.begin(), n.end(), x.row(c).begin());
    }
    const auto r = rms_artifact_reject(x, fs, {});
    rejected += r.rejected_count();
    total += r.rejected.size();
  }
  CHECK(static_cast<double>(rejected) <= 0.02 * static_cast<double>(total));
}

TEST_CASE("RMS rejection keeps silence and is scale invariant") {
  const auto zero = rms_artifact_reject(Matrix(3, 2000), 200.0, {});
  CHECK(zero.rejected_count() == 0);
  CHECK(zero.rejected.size() == 10);

  Matrix x(2, 40 * 100);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto n = testutil::white_noise(x.cols(), 10.0, 7 + c);
    std::copy(n.begin(), n.end(), x.row(c).begin());
  }
  for (std::size_t i = 1200; i < 1300; ++i) x(1, i) *= 6.0;
  for (std::size_t i = 2550; i < 2600; ++i) x(0, i) *= 4.0;
  const auto base = rms_artifact_reject(x, 100.0, {});
  CHECK(base.rejected_count() >= 1);
  for (double scale : {0.01, 3.0}) {
    Matrix y = x;
    for (auto& v : y.data()) v *= scale;
    const auto r = rms_artifact_reject(y, 100.0, {});
    CHECK(r.rejected == base.rejected);
    CHECK(r.rms(1, 12) == doctest::Approx(scale * base.rms(1, 12)));
  }

  CHECK_THROWS_AS(rms_artifact_reject(Matrix(1, 50), 100.0, {}), Error);
}

TEST_CASE("resampling preserves passband tones") {
  const auto x = testutil::sine(5000, 10.0, 500.0, 40.0);
  const auto y = resample(x, 500.0, 250.0);
  CHECK(y.size() == 2500);
  CHECK(testutil::rms(y, 250) == doctest::Approx(testutil::rms(x, 500)).epsilon(0.02));
  const std::vector<double> inner(y.begin() + 250, y.begin() + 2250);
  CHECK(testutil::dft_peak_frequency(inner, 250.0, 1.0, 120.0) == doctest::Approx(10.0));

  CHECK(resample(x, 500.0, 500.0) == x);
  CHECK_THROWS_AS(resample(x, 250.0, 500.0), Error);
  CHECK_THROWS_AS(resample(x, 250.5, 200.0), Error);

  // 256 -> 250 uses a 125/128 ratio.
  const auto t = testutil::sine(2560, 12.0, 256.0, 10.0);
  const auto u = resample(t, 256.0, 250.0);
  CHECK(u.size() == 2500);
  CHECK(testutil::rms(u, 300) == doctest::Approx(testutil::rms(t, 300)).epsilon(0.02));
  for (std::size_t i = 300; i < 2200; i += 97) {
    CHECK(u[i] == doctest::Approx(10.0 * std::sin(2.0 * testutil::kPi * 12.0 * i / 250.0))
                      .scale(10.0)
                      .epsilon(0.02));
  }
}

TEST_CASE("resampling suppresses tones above the new Nyquist") {
  const auto x = testutil::sine(5000, 120.0, 500.0, 40.0);
  const auto y = resample(x, 500.0, 200.0);
  CHECK(y.size() == 2000);
  const std::vector<double> inner(y.begin() + 200, y.begin() + 1800);
  const double alias_amp = 2.0 * testutil::dft_magnitude(inner, 80.0 * 1600.0 / 200.0) / 1600.0;
  CHECK(20.0 * std::log10(alias_amp / 40.0) <= -40.0);
  CHECK(20.0 * std::log10(testutil::rms(y, 200) / testutil::rms(x, 500)) <= -40.0);
}

TEST_CASE("montage matrices") {
  const auto ch = ten_twenty();
  const Montage car = build_montage(MontageKind::CAR, ch);
  CHECK(car.matrix.rows() == 19);
  for (std::size_t r = 0; r < 19; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 19; ++c) sum += car.matrix(r, c);
    CHECK(std::abs(sum) < 1e-12);
    CHECK(car.matrix(r, r) == doctest::Approx(18.0 / 19.0));
  }

  Matrix common(19, 50);
  for (std::size_t r = 0; r < 19; ++r) {
    for (std::size_t i = 0; i < 50; ++i) common(r, i) = std::sin(0.3 * i);
  }
  const auto zero = apply_montage(common, car);
  CHECK(std::all_of(zero.data().begin(), zero.data().end(),
                    [](double v) { return std::abs(v) < 1e-12; }));

  const Montage cz = build_montage(MontageKind::Cz, ch);
  CHECK(cz.matrix.rows() == 18);
  const auto czi = *ten_twenty_index("Cz");
  const auto c3 = *ten_twenty_index("C3");
  Matrix data(19, 10);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t r = 0; r < 19; ++r) data(r, i) = static_cast<double>(r * 10 + i);
    data(c3, i) = data(czi, i);
  }
  const auto d = apply_montage(data, cz);
  const auto row = std::find(cz.names.begin(), cz.names.end(), "C3-Cz") - cz.names.begin();
  for (std::size_t i = 0; i < 10; ++i) CHECK(d(row, i) == 0.0);
  for (std::size_t r = 0; r < 18; ++r) {
    CHECK(cz.matrix(r, czi) == -1.0);
    CHECK(std::count(cz.matrix.row(r).begin(), cz.matrix.row(r).end(), 1.0) == 1);
  }

  const Montage db = build_montage(MontageKind::BipolarDB, ch);
  REQUIRE(db.names.size() == 18);
  CHECK(db.names[0] == "Fp1-F7");
  Matrix tones(19, 100);
  const auto s = testutil::sine(100, 3.0, 100.0);
  for (std::size_t i = 0; i < 100; ++i) {
    tones(*ten_twenty_index("Fp1"), i) = 2.0 * s[i];
    tones(*ten_twenty_index("F7"), i) = s[i];
  }
  const auto bip = apply_montage(tones, db);
  for (std::size_t i = 0; i < 100; ++i) CHECK(bip(0, i) == doctest::Approx(s[i]));
  for (std::size_t r = 0; r < 18; ++r) {
    const auto rr = db.matrix.row(r);
    CHECK(std::count(rr.begin(), rr.end(), 1.0) == 1);
    CHECK(std::count(rr.begin(), rr.end(), -1.0) == 1);
  }

  const Montage lap = build_montage(MontageKind::Laplacian, ch);
  for (std::size_t r = 0; r < 19; ++r) {
    double sum = 0.0;
    for (double v : lap.matrix.row(r)) sum += v;
    CHECK(std::abs(sum) < 1e-12);
  }
  for (auto n : {"F3", "P3", "Cz", "T3"}) {
    CHECK(lap.matrix(c3, *ten_twenty_index(n)) == -0.25);
  }
  CHECK(lap.matrix(c3, c3) == 1.0);
}

TEST_CASE("montages report missing channels") {
  std::vector<std::string> ch = ten_twenty();
  ch.erase(std::find(ch.begin(), ch.end(), "Cz"));
  try {
    build_montage(MontageKind::Cz, ch);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("Cz") != std::string::npos);
  }
  try {
    build_montage(MontageKind::BipolarDB, ch);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("Cz") != std::string::npos);
  }
  CHECK_NOTHROW(build_montage(MontageKind::CAR, ch));
  // Fz keeps F3 and F4 as neighbours.
  const auto lap = build_montage(MontageKind::Laplacian, ch);
  const auto fz = std::find(ch.begin(), ch.end(), "Fz") - ch.begin();
  const auto f3 = std::find(ch.begin(), ch.end(), "F3") - ch.begin();
  CHECK(lap.matrix(fz, f3) == doctest::Approx(-0.5));
}

TEST_CASE("windowing counts and rejected spans") {
  CHECK(window_spans({0, 65}, 20).size() == 3);
  CHECK(window_spans({0, 60}, 60).size() == 1);
  try {
    window_spans({0, 59}, 60);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "segment too short");
  }
  const std::vector<SampleSpan> rejected{{25, 30}};
  const auto w = window_spans({0, 100}, 20, rejected);
  REQUIRE(w.size() == 4);
  CHECK(w[1] == SampleSpan{40, 60});

  Recording rec;
  rec.subject_id = "s";
  rec.channels = ten_twenty();
  rec.fs = 10.0;
  rec.data = Matrix(19, 700, 1.0);
  rec.segments = {{SegmentKind::Resting, {0, 650}}};
  const auto ws = window_segment(rec, SegmentKind::Resting, build_montage(MontageKind::CAR, rec.channels), 20.0);
  REQUIRE(ws.windows.size() == 3);
  CHECK(ws.windows[0].cols() == 200);
  CHECK(ws.windows[0].rows() == 19);
  CHECK_THROWS_AS(window_segment(rec, SegmentKind::IPS, build_montage(MontageKind::CAR, rec.channels), 1.0), Error);
}

TEST_CASE("full chain keeps passband amplitude and maps segments") {
  Recording raw;
  raw.subject_id = "s1";
  raw.channels = {"C3", "C4"};
  raw.fs = 500.0;
  raw.data = Matrix(2, 500 * 40);
  const auto tone = testutil::sine(raw.data.cols(), 10.0, 500.0, 25.0);
  const auto noise = testutil::sine(raw.data.cols(), 50.0, 500.0, 30.0);
  for (std::size_t i = 0; i < raw.data.cols(); ++i) {
    raw.data(0, i) = tone[i] + noise[i] + 80.0;
    raw.data(1, i) = tone[i];
  }
  raw.segments = {{SegmentKind::Resting, {0, 10001}}, {SegmentKind::IPS, {10001, 20000}}};
  PreprocessConfig cfg;
  const auto out = run(raw, cfg);
  CHECK(out.recording.fs == 200.0);
  CHECK(out.recording.samples() == 8000);
  CHECK(out.rejection.rejected_count() == 0);
  CHECK(testutil::rms(out.recording.data.row(0), 1000) ==
        doctest::Approx(testutil::rms(tone, 2500)).epsilon(0.02));
  REQUIRE(out.recording.segments.size() == 2);
  CHECK(out.recording.segments[0].span == SampleSpan{0, 4000});
  CHECK(out.recording.segments[1].span == SampleSpan{4001, 8000});

  cfg.target_fs = 1000.0;
  CHECK_THROWS_AS(run(raw, cfg), Error);
}
