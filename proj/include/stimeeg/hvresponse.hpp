#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stimeeg/recording.hpp"

namespace stimeeg::hv {

struct EpochConfig {
  double epoch_s = 5.0;
  double trim_fraction = 0.15;  // removed at each end of the HV segment
  std::size_t baseline_epochs = 6;
  std::size_t sample_epochs = 8;
  double sample_center = 0.75;  // fraction of the trimmed epochs
  std::size_t min_epochs = 3;
};

/// Epoch windows over an HV segment. Epoch i covers
/// [trimmed.begin + i * epoch_samples, trimmed.begin + (i + 1) * epoch_samples).
struct EpochPlan {
  SampleSpan trimmed;
  std::size_t epoch_samples = 0;
  std::size_t n_epochs = 0;
  std::size_t baseline_first = 0, baseline_count = 0;
  std::size_t sample_first = 0, sample_count = 0;

  SampleSpan epoch(std::size_t i) const;
};

/// Baseline is the first epochs; the sample window is centred on
/// round(center * n_epochs), taking half the epochs before it, clipped to the
/// segment and to the epochs after the baseline.
EpochPlan plan_epochs(SampleSpan hv, double fs, const EpochConfig& cfg = {});

/// 100 * (sample - baseline) / baseline, or nullopt when baseline power is 0.
std::optional<double> percent_change(double baseline, double sample);

/// -d_alpha + d_theta + d_delta
double slowing_index(double d_delta, double d_theta, double d_alpha);

struct SubjectSlowing {
  std::string subject_id;
  std::optional<Label> label;
  double d_delta = 0.0, d_theta = 0.0, d_alpha = 0.0;  // percent
  double s = 0.0;
  std::optional<double> z;
  bool responder = false;
  bool valid = false;
  std::size_t baseline_epochs = 0, sample_epochs = 0;
  std::string note;  // reason when invalid
};

/// CAR re-reference, epoching and band-power change for one preprocessed
/// recording. Epochs touching rejected spans are skipped.
SubjectSlowing analyze(const Recording& rec, const EpochConfig& cfg = {});

struct SlowingReport {
  std::vector<SubjectSlowing> subjects;
  double mean = 0.0, std = 0.0;  // of S over valid subjects
  bool z_defined = false;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// z-scores over valid subjects (population std); responder iff valid and S > 0.
SlowingReport stratify(std::vector<SubjectSlowing> subjects);

}  // namespace stimeeg::hv
