#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stimeeg/ingest.hpp"
#include "stimeeg/recording.hpp"

namespace stimeeg::synth {

struct SynthSpec {
  std::size_t n_per_class = 10;
  double fs = 200.0;
  double resting_s = 60.0;
  double train_s = 5.0;  // each photic train
  double train_gap_s = 3.0;
  double hv_s = 180.0;
  double pad_s = 10.0;  // quiet time between blocks and at the end

  double background_uv = 10.0;  // RMS of the 1/f background
  double alpha_uv = 8.0;        // RMS of the occipital alpha rhythm
  double white_uv = 2.0;
  /// Standard deviation of the log amplitude of a slow (0.05-0.5 Hz)
  /// fluctuation shared by background and alpha.
  double modulation_depth = 0.25;
  double trigger_level = 100.0;

  /// Epileptic subjects: occipital response at the flash frequency with power
  /// photic_driving_gain times the alpha power (alpha_uv^2).
  double photic_driving_gain = 0.0;
  /// Epileptic subjects: theta/delta growth and alpha loss over the HV block.
  double hv_slowing_gain = 0.0;
  /// Other subjects: alpha growth over the HV block.
  double hv_arousal_gain = 0.0;
  /// Epileptic subjects: shared theta source added to every channel, in
  /// multiples of alpha_uv.
  double plv_coupling_gain = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Flash frequencies of the sweep: 1, 3, ..., 21 Hz.
std::vector<double> sweep_frequencies();

struct Subject {
  Recording recording;  // 10-20 channels with segments and label
  std::vector<double> photic;  // trigger channel at recording.fs
  std::vector<ingest::PhoticTrain> trains;
  bool hv_slowing = false;  // ground truth
  ingest::Sidecar sidecar;
};

/// Subjects alternate Epileptic / NonEpileptic starting with Epileptic.
/// Each subject depends only on (seed, index).
std::vector<Subject> gen_cohort(const SynthSpec& spec);
Subject gen_subject(const SynthSpec& spec, std::size_t index);

/// <dir>/<subject>.edf plus <subject>.meta for each subject.
void write_cohort(const std::vector<Subject>& cohort, const std::filesystem::path& dir);

}  // namespace stimeeg::synth
