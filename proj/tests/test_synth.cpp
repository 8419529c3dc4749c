#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "stimeeg/dsp.hpp"
#include "stimeeg/ingest.hpp"
#include "stimeeg/preprocess.hpp"
#include "stimeeg/synth.hpp"

using namespace stimeeg;

namespace {

synth::SynthSpec small_spec() {
  synth::SynthSpec s;
  s.n_per_class = 2;
  s.resting_s = 30.0;
  s.hv_s = 60.0;
  s.seed = 3;
  return s;
}

double band_power_at(const Recording& rec, std::string_view ch, SampleSpan span, double f) {
  const auto c = *rec.channel(ch);
  const auto psd = dsp::welch(rec.data.row(c).subspan(span.begin, span.size()), rec.fs, 2.0);
  return dsp::band_power(psd, f - 0.5, f + 0.5);
}

}  // namespace

TEST_CASE("cohort layout and labels") {
  const auto cohort = synth::gen_cohort(small_spec());
  REQUIRE(cohort.size() == 4);
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& rec = cohort[i].recording;
    CHECK(rec.channels.size() == 19);
    CHECK(*rec.label == (i % 2 == 0 ? Label::Epileptic : Label::NonEpileptic));
    REQUIRE(rec.segment(SegmentKind::Resting));
    REQUIRE(rec.segment(SegmentKind::IPS));
    REQUIRE(rec.segment(SegmentKind::HV));
    CHECK(rec.segment(SegmentKind::HV)->span.size() == 60 * 200);
    CHECK(rec.segment(SegmentKind::IPS)->span.size() == (10 * 8 + 5) * 200);
    CHECK(cohort[i].photic.size() == rec.samples());
  }
  CHECK(cohort[0].recording.subject_id == "sub001");
  CHECK_THROWS_AS(synth::gen_cohort(synth::SynthSpec{.n_per_class = 0}), Error);
  CHECK_THROWS_AS(synth::gen_cohort(synth::SynthSpec{.fs = 40.0}), Error);
}

TEST_CASE("generation is deterministic per seed and subject") {
  const auto spec = small_spec();
  const auto a = synth::gen_cohort(spec);
  const auto b = synth::gen_cohort(spec);
  CHECK(a[1].recording.data == b[1].recording.data);
  CHECK(synth::gen_subject(spec, 3).recording.data == a[3].recording.data);
  auto other = spec;
  other.seed = 4;
  CHECK_FALSE(synth::gen_cohort(other)[1].recording.data == a[1].recording.data);
}

TEST_CASE("trigger sweep is recovered") {
  const auto s = synth::gen_subject(small_spec(), 0);
  const auto trains = ingest::detect_ips_trains(s.photic, s.recording.fs);
  const auto freqs = synth::sweep_frequencies();
  REQUIRE(trains.size() == freqs.size());
  for (std::size_t i = 0; i < freqs.size(); ++i) CHECK(std::abs(trains[i].flash_frequency_hz - freqs[i]) <= 0.5);
}

TEST_CASE("default cohort passes preprocessing with little rejection") {
  auto spec = small_spec();
  spec.n_per_class = 3;
  for (const auto& s : synth::gen_cohort(spec)) {
    const auto pp = preprocess::run(s.recording, {});
    const double frac = static_cast<double>(pp.rejection.rejected_count()) /
                        static_cast<double>(pp.rejection.rejected.size());
    CHECK(frac < 0.05);
  }
}

TEST_CASE("photic driving raises occipital power at the flash frequency") {
  auto spec = small_spec();
  spec.photic_driving_gain = 5.0;
  const auto epi = synth::gen_subject(spec, 0);
  const auto ctl = synth::gen_subject(spec, 1);
  const auto& t = epi.trains[2];  // 5 Hz
  const double pe = band_power_at(epi.recording, "O1", {t.start_sample, t.end_sample}, 5.0);
  const double pc = band_power_at(ctl.recording, "O1", {t.start_sample, t.end_sample}, 5.0);
  CHECK(pe > 10.0 * pc);
}

TEST_CASE("EDF export goes through ingestion") {
  const auto dir = std::filesystem::temp_directory_path() / "stimeeg_synth_test";
  std::filesystem::remove_all(dir);
  const auto cohort = synth::gen_cohort(small_spec());
  synth::write_cohort(cohort, dir);
  for (const auto& s : cohort) {
    const auto got = ingest::ingest_file(dir / (s.recording.subject_id + ".edf"));
    const auto& rec = got.recording;
    CHECK(rec.subject_id == s.recording.subject_id);
    CHECK(rec.label == s.recording.label);
    CHECK(rec.channels == s.recording.channels);
    CHECK(got.trains.size() == 11);
    const auto* hv = rec.segment(SegmentKind::HV);
    REQUIRE(hv);
    CHECK(hv->span == s.recording.segment(SegmentKind::HV)->span);
    REQUIRE(rec.segment(SegmentKind::IPS));
    double worst = 0.0, range = 0.0;
    for (std::size_t c = 0; c < 19; ++c) {
      for (std::size_t i = 0; i < rec.samples(); i += 97) {
        worst = std::max(worst, std::abs(rec.data(c, i) - s.recording.data(c, i)));
        range = std::max(range, std::abs(s.recording.data(c, i)));
      }
    }
    CHECK(worst <= 2.0 * range / 65535.0 + 1e-9);
  }
  std::filesystem::remove_all(dir);
}
