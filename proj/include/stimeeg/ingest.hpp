#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stimeeg/edf.hpp"
#include "stimeeg/recording.hpp"

namespace stimeeg::ingest {

/// Canonical 10-20 name for a raw EDF label ("EEG FP1-REF" -> "Fp1",
/// "T7" -> "T3"), or nullopt when the label is not a 10-20 electrode.
std::optional<std::string> normalize_label(std::string_view raw);

/// True for labels naming the photic trigger channel.
bool is_photic_label(std::string_view raw);

/// Multiplier converting a physical dimension to microvolts.
double microvolt_scale(std::string_view dimension);

struct TriggerChannel {
  std::string label;
  double fs = 0.0;
  std::vector<double> samples;
};

struct ChannelSelection {
  Recording recording;  // unlabeled, unsegmented
  std::optional<TriggerChannel> photic;
  std::vector<std::string> discarded;
};

/// Keeps the 10-20 channels in canonical order, converted to microvolts.
/// Throws on fewer than two matched channels, unknown units or mixed rates.
ChannelSelection select_channels(const edf::File& file, std::string subject_id = {});

struct PhoticTrain {
  std::size_t start_sample = 0;
  std::size_t end_sample = 0;
  double flash_frequency_hz = 0.0;
};

struct TrainDetectorConfig {
  double window_s = 1.0;
  double hop_s = 0.25;
  double min_freq_hz = 0.5;
  double max_freq_hz = 30.0;
  double median_factor = 10.0;
  /// Active runs separated by at most this many inactive frames are merged.
  std::size_t max_gap_frames = 2;
};

/// Finds flash trains on the trigger channel from its short-time spectrum.
/// Sample indices refer to the trigger channel's own rate.
std::vector<PhoticTrain> detect_ips_trains(std::span<const double> photic, double fs,
                                           const TrainDetectorConfig& cfg = {});

/// Converts train boundaries between sampling rates.
std::vector<PhoticTrain> rescale_trains(const std::vector<PhoticTrain>& trains, double from_fs,
                                        double to_fs);

/// Assigns IPS (first train start to last train end), HV (annotation) and
/// Resting (longest stimulus-free span). `trains` are in recording samples.
Recording locate_segments(Recording rec, const std::vector<PhoticTrain>& trains,
                          std::optional<SampleSpan> hv);

struct Sidecar {
  std::string subject_id;
  std::optional<Label> label;
  bool ied_free = true;
  std::optional<double> hv_start_s;
  std::optional<double> hv_end_s;
};

/// `key = value` lines, `#` comments.
Sidecar parse_sidecar(std::string_view text);
std::string format_sidecar(const Sidecar& sc);
Sidecar read_sidecar(const std::filesystem::path& path);

/// Sidecar path for an EDF file: same stem, ".meta" extension.
std::filesystem::path sidecar_path(const std::filesystem::path& edf_path);

struct IngestResult {
  Recording recording;
  std::vector<PhoticTrain> trains;  // in recording samples
  std::vector<std::string> discarded_channels;
  bool has_photic_channel = false;
};

/// parse -> select channels -> detect trains -> locate segments -> apply labels.
IngestResult ingest(const edf::File& file, const Sidecar& sidecar);
IngestResult ingest_file(const std::filesystem::path& edf_path);

}  // namespace stimeeg::ingest
