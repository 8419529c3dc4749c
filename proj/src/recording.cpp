#include "stimeeg/recording.hpp"

#include <algorithm>

namespace stimeeg {

std::optional<std::size_t> ten_twenty_index(std::string_view name) {
  auto it = std::find(kTenTwenty.begin(), kTenTwenty.end(), name);
  if (it == kTenTwenty.end()) return std::nullopt;
  return static_cast<std::size_t>(it - kTenTwenty.begin());
}

std::string_view to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Resting: return "Resting";
    case SegmentKind::IPS: return "IPS";
    case SegmentKind::HV: return "HV";
  }
  return "?";
}

SegmentKind parse_segment_kind(std::string_view text) {
  if (text == "Resting" || text == "resting" || text == "rest") return SegmentKind::Resting;
  if (text == "IPS" || text == "ips") return SegmentKind::IPS;
  if (text == "HV" || text == "hv") return SegmentKind::HV;
  throw Error("unknown segment kind '" + std::string(text) + "'");
}

std::string_view to_string(Label label) {
  return label == Label::Epileptic ? "epileptic" : "non_epileptic";
}

Label parse_label(std::string_view text) {
  if (text == "epileptic" || text == "1") return Label::Epileptic;
  if (text == "non_epileptic" || text == "0") return Label::NonEpileptic;
  throw Error("unknown label '" + std::string(text) + "'");
}

std::optional<std::size_t> Recording::channel(std::string_view name) const {
  auto it = std::find(channels.begin(), channels.end(), name);
  if (it == channels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - channels.begin());
}

const Segment* Recording::segment(SegmentKind kind) const {
  for (const auto& s : segments) {
    if (s.kind == kind) return &s;
  }
  return nullptr;
}

void Recording::validate() const {
  if (!(fs > 0.0)) throw Error(subject_id + ": sampling rate must be positive");
  if (data.rows() != channels.size()) throw Error(subject_id + ": data rows != channel count");
  for (const auto& c : channels) {
    if (!ten_twenty_index(c)) throw Error(subject_id + ": channel '" + c + "' is not 10-20");
  }
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& s = segments[i].span;
    if (s.begin >= s.end || s.end > samples()) {
      throw Error(subject_id + ": segment " + std::string(to_string(segments[i].kind)) +
                  " outside the recording");
    }
    for (std::size_t j = i + 1; j < segments.size(); ++j) {
      if (s.overlaps(segments[j].span)) throw Error(subject_id + ": overlapping segments");
    }
  }
}

}  // namespace stimeeg
