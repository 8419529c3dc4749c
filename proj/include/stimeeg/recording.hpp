#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stimeeg/core.hpp"

namespace stimeeg {

/// The 19 electrodes of the 10-20 system in canonical order.
inline constexpr std::array<std::string_view, 19> kTenTwenty = {
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
    "C4",  "T4",  "T5", "P3", "Pz", "P4", "T6", "O1", "O2"};

std::optional<std::size_t> ten_twenty_index(std::string_view name);

enum class SegmentKind { Resting, IPS, HV };

std::string_view to_string(SegmentKind kind);
SegmentKind parse_segment_kind(std::string_view text);

enum class Label { Epileptic, NonEpileptic };

std::string_view to_string(Label label);
Label parse_label(std::string_view text);

struct Segment {
  SegmentKind kind;
  SampleSpan span;
};

/// Multichannel EEG in microvolts, channels x samples.
struct Recording {
  std::string subject_id;
  std::vector<std::string> channels;
  double fs = 0.0;
  Matrix data;
  std::vector<Segment> segments;
  std::optional<Label> label;
  bool ied_free = true;
  /// Sample spans removed by artifact rejection; empty before preprocessing.
  std::vector<SampleSpan> rejected;

  std::size_t samples() const { return data.cols(); }
  double duration_s() const { return static_cast<double>(samples()) / fs; }
  std::optional<std::size_t> channel(std::string_view name) const;
  const Segment* segment(SegmentKind kind) const;

  /// Throws Error if any invariant is violated.
  void validate() const;
};

}  // namespace stimeeg
