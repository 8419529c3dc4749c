#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stimeeg/core.hpp"

namespace stimeeg::edf {

/// Malformed EDF input. `offset()` is the byte offset of the offending field.
class EdfError : public Error {
 public:
  EdfError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

struct DateTime {
  int year = 1985, month = 1, day = 1;
  int hour = 0, minute = 0, second = 0;
  bool operator==(const DateTime&) const = default;
};

struct SignalHeader {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0.0;
  double physical_max = 0.0;
  std::int32_t digital_min = 0;
  std::int32_t digital_max = 0;
  std::string prefiltering;
  std::int64_t samples_per_record = 0;

  /// Physical value of a digital sample (affine calibration).
  double to_physical(std::int32_t digital) const {
    return physical_min + (static_cast<double>(digital) - digital_min) *
                              (physical_max - physical_min) / (digital_max - digital_min);
  }
  double quantization_step() const {
    return (physical_max - physical_min) / (digital_max - digital_min);
  }
};

struct Header {
  std::string version = "0";
  std::string patient_id;
  std::string recording_id;
  DateTime start;
  std::int64_t header_bytes = 0;
  std::int64_t n_records = 0;
  double record_duration_s = 1.0;
  std::vector<SignalHeader> signals;

  std::size_t n_signals() const { return signals.size(); }
  double sampling_rate(std::size_t signal) const {
    return static_cast<double>(signals[signal].samples_per_record) / record_duration_s;
  }
};

struct File {
  Header header;
  /// Per signal, physical units, native rate.
  std::vector<std::vector<double>> signals;
};

File parse(std::span<const std::byte> bytes);
File read_file(const std::filesystem::path& path);

/// One signal to encode. The calibration range is taken from the data unless
/// given explicitly (physical_max > physical_min).
struct SignalData {
  std::string label;
  std::string physical_dimension = "uV";
  double fs = 0.0;
  std::vector<double> samples;
  double physical_min = 0.0;
  double physical_max = 0.0;
};

struct WriteOptions {
  std::string patient_id = "X X X X";
  std::string recording_id = "Startdate X X X X";
  DateTime start;
  double record_duration_s = 1.0;
};

/// Encodes 16-bit EDF. Trailing samples that do not fill a record are padded
/// with the last value.
std::vector<std::byte> write(const std::vector<SignalData>& signals, const WriteOptions& opts = {});
void write_file(const std::filesystem::path& path, const std::vector<SignalData>& signals,
                const WriteOptions& opts = {});

}  // namespace stimeeg::edf
