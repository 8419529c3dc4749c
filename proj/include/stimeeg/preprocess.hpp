#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stimeeg/core.hpp"
#include "stimeeg/recording.hpp"

namespace stimeeg::preprocess {

struct PreprocessConfig {
  double notch_hz = 50.0;
  double notch_q = 30.0;
  double highpass_hz = 1.0;
  int highpass_order = 4;
  double target_fs = 200.0;
  double rms_window_s = 1.0;
  /// A window is rejected when any channel RMS exceeds median + k * MAD of that
  /// channel's window RMS values, or the absolute ceiling.
  double rms_mad_k = 6.0;
  /// MAD used in the rule is at least this fraction of the median, so that
  /// near-deterministic signals with MAD ~ 0 do not reject on rounding noise.
  double rms_mad_floor = 0.05;
  double rms_abs_uv = 500.0;

  void validate() const;
};

/// Zero-phase second-order notch, per channel. Requires fs > 2 * notch_hz.
Matrix notch_filter(const Matrix& signal, double fs, double notch_hz, double q = 30.0);

/// Butterworth high-pass applied forward and backward, per channel.
Matrix highpass_zero_phase(const Matrix& signal, double fs, double cutoff_hz, int order = 4);

struct RejectionResult {
  std::size_t window_samples = 0;
  std::vector<bool> rejected;  // one flag per consecutive window
  Matrix rms;                  // channels x windows
  std::vector<SampleSpan> kept;
  std::vector<SampleSpan> rejected_spans;

  std::size_t rejected_count() const;
  bool nothing_kept() const { return kept.empty(); }
};

RejectionResult rms_artifact_reject(const Matrix& signal, double fs, const PreprocessConfig& cfg);

/// Polyphase rational resampling with a Kaiser-windowed anti-aliasing filter
/// cut at 0.9 x the output Nyquist. Rates must be integer-valued.
std::vector<double> resample(std::span<const double> x, double fs_in, double fs_out);
Matrix resample(const Matrix& signal, double fs_in, double fs_out);

enum class MontageKind { CAR, Cz, Laplacian, BipolarDB };

std::string_view to_string(MontageKind kind);
MontageKind parse_montage(std::string_view text);

struct Montage {
  MontageKind kind;
  std::vector<std::string> names;
  Matrix matrix;  // derived x source channels
};

/// Re-referencing matrix for the given source channels. Throws an Error naming
/// the first missing channel the montage needs.
Montage build_montage(MontageKind kind, const std::vector<std::string>& channels);

Matrix apply_montage(const Matrix& data, const Montage& montage);

/// Neighbour table used by the small Laplacian.
const std::vector<std::string_view>& laplacian_neighbors(std::string_view electrode);

/// The 18 longitudinal double-banana derivations as (anode, cathode).
const std::vector<std::pair<std::string_view, std::string_view>>& double_banana();

struct WindowedSegment {
  MontageKind montage;
  SegmentKind segment;
  double window_length_s = 0.0;
  double fs = 0.0;
  std::vector<std::string> channels;
  std::vector<Matrix> windows;  // channels x samples, time-ordered
};

/// Consecutive non-overlapping windows inside `segment`, skipping any window
/// that touches a rejected span. Throws "segment too short" when the segment is
/// shorter than one window.
std::vector<SampleSpan> window_spans(SampleSpan segment, std::size_t window_samples,
                                     std::span<const SampleSpan> rejected = {});

WindowedSegment window_segment(const Recording& rec, SegmentKind kind, const Montage& montage,
                               double window_length_s);

struct Preprocessed {
  Recording recording;
  RejectionResult rejection;  // in source-rate samples
};

/// notch -> high-pass -> RMS rejection -> resampling; segments and rejected
/// spans are carried over to the output rate.
Preprocessed run(const Recording& raw, const PreprocessConfig& cfg);

}  // namespace stimeeg::preprocess
