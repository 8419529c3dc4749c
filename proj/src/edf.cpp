#include "stimeeg/edf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>

namespace stimeeg::edf {

namespace {

constexpr std::size_t kFixedHeader = 256;
constexpr std::size_t kPerSignal = 256;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(' ');
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(' ');
  return std::string(s.substr(b, e - b + 1));
}

class FieldReader {
 public:
  explicit FieldReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::string text(std::size_t offset, std::size_t width) const {
    if (offset + width > bytes_.size()) throw EdfError("truncated header", bytes_.size());
    std::string out(width, ' ');
    std::memcpy(out.data(), bytes_.data() + offset, width);
    return trim(out);
  }

  template <typename T>
  T number(std::size_t offset, std::size_t width, const char* name) const {
    const std::string s = text(offset, width);
    T value{};
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (s.empty() || ec != std::errc() || ptr != last) {
      throw EdfError(std::string("non-numeric field '") + name + "': '" + s + "'", offset);
    }
    return value;
  }

 private:
  std::span<const std::byte> bytes_;
};

DateTime parse_datetime(const FieldReader& r) {
  const std::string date = r.text(168, 8);
  const std::string time = r.text(176, 8);
  auto part = [&](const std::string& s, std::size_t pos, std::size_t off) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + std::min(s.size(), pos + 2), v);
    if (ec != std::errc() || s.size() < pos + 2 || ptr != s.data() + pos + 2) {
      throw EdfError("non-numeric field 'start datetime': '" + s + "'", off + pos);
    }
    return v;
  };
  DateTime dt;
  dt.day = part(date, 0, 168);
  dt.month = part(date, 3, 168);
  const int yy = part(date, 6, 168);
  dt.year = yy >= 85 ? 1900 + yy : 2000 + yy;
  dt.hour = part(time, 0, 176);
  dt.minute = part(time, 3, 176);
  dt.second = part(time, 6, 176);
  return dt;
}

void put(std::string& header, std::size_t offset, std::size_t width, const std::string& value) {
  if (value.size() > width) throw Error("EDF field overflow: '" + value + "'");
  header.replace(offset, value.size(), value);
}

// Decimal string of at most 8 characters that bounds `v` from below (down) or
// above.
std::string fit8(double v, bool down) {
  for (int d = 7; d >= 0; --d) {
    const double scale = std::pow(10.0, d);
    double r = down ? std::floor(v * scale) / scale : std::ceil(v * scale) / scale;
    if (r == 0.0) r = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", d, r);
    if (std::strlen(buf) <= 8) return buf;
  }
  throw Error("EDF physical range does not fit an 8-character field");
}

std::string fmt_int(std::int64_t v) { return std::to_string(v); }

}  // namespace

EdfError::EdfError(const std::string& what, std::size_t offset)
    : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

File parse(std::span<const std::byte> bytes) {
  if (bytes.size() < kFixedHeader) throw EdfError("truncated header", bytes.size());
  const FieldReader r(bytes);
  File file;
  Header& h = file.header;
  h.version = r.text(0, 8);
  h.patient_id = r.text(8, 80);
  h.recording_id = r.text(88, 80);
  h.start = parse_datetime(r);
  h.header_bytes = r.number<std::int64_t>(184, 8, "header bytes");
  h.n_records = r.number<std::int64_t>(236, 8, "number of records");
  h.record_duration_s = r.number<double>(244, 8, "record duration");
  const auto ns = r.number<std::int64_t>(252, 4, "number of signals");
  if (ns < 1) throw EdfError("number of signals must be positive", 252);
  const auto n = static_cast<std::size_t>(ns);
  if (h.header_bytes != static_cast<std::int64_t>(kFixedHeader + kPerSignal * n)) {
    throw EdfError("header size mismatch: field says " + std::to_string(h.header_bytes) +
                       ", expected " + std::to_string(kFixedHeader + kPerSignal * n),
                   184);
  }
  if (bytes.size() < kFixedHeader + kPerSignal * n) throw EdfError("truncated header", bytes.size());
  if (!(h.record_duration_s > 0.0)) throw EdfError("record duration must be positive", 244);

  // Field blocks are laid out column-wise: all labels, then all transducers...
  std::size_t off = kFixedHeader;
  auto column = [&](std::size_t width) {
    const std::size_t base = off;
    off += width * n;
    return base;
  };
  const std::size_t label_off = column(16), trans_off = column(80), dim_off = column(8),
                    pmin_off = column(8), pmax_off = column(8), dmin_off = column(8),
                    dmax_off = column(8), pre_off = column(80), spr_off = column(8);

  h.signals.resize(n);
  std::size_t record_bytes = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = h.signals[i];
    s.label = r.text(label_off + 16 * i, 16);
    s.transducer = r.text(trans_off + 80 * i, 80);
    s.physical_dimension = r.text(dim_off + 8 * i, 8);
    s.physical_min = r.number<double>(pmin_off + 8 * i, 8, "physical minimum");
    s.physical_max = r.number<double>(pmax_off + 8 * i, 8, "physical maximum");
    s.digital_min = r.number<std::int32_t>(dmin_off + 8 * i, 8, "digital minimum");
    s.digital_max = r.number<std::int32_t>(dmax_off + 8 * i, 8, "digital maximum");
    s.prefiltering = r.text(pre_off + 80 * i, 80);
    s.samples_per_record = r.number<std::int64_t>(spr_off + 8 * i, 8, "samples per record");
    if (!(s.physical_max > s.physical_min)) {
      throw EdfError("physical maximum must exceed physical minimum", pmax_off + 8 * i);
    }
    if (!(s.digital_max > s.digital_min)) {
      throw EdfError("digital maximum must exceed digital minimum", dmax_off + 8 * i);
    }
    if (s.samples_per_record < 1) throw EdfError("samples per record must be >= 1", spr_off + 8 * i);
    record_bytes += 2 * static_cast<std::size_t>(s.samples_per_record);
  }

  const std::size_t data_bytes = bytes.size() - static_cast<std::size_t>(h.header_bytes);
  if (h.n_records == -1) {
    if (data_bytes % record_bytes != 0) {
      throw EdfError("record count inconsistent with file size", bytes.size());
    }
    h.n_records = static_cast<std::int64_t>(data_bytes / record_bytes);
  } else if (h.n_records < 0 ||
             static_cast<std::size_t>(h.n_records) * record_bytes != data_bytes) {
    throw EdfError("record count inconsistent with file size: header declares " +
                       std::to_string(h.n_records) + " records of " +
                       std::to_string(record_bytes) + " bytes, data holds " +
                       std::to_string(data_bytes) + " bytes",
                   236);
  }

  file.signals.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    file.signals[i].reserve(static_cast<std::size_t>(h.n_records * h.signals[i].samples_per_record));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.header_bytes;
  for (std::int64_t rec = 0; rec < h.n_records; ++rec) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = h.signals[i];
      auto& out = file.signals[i];
      for (std::int64_t k = 0; k < s.samples_per_record; ++k) {
        const auto raw = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0]) |
                                                   (static_cast<std::uint16_t>(p[1]) << 8));
        out.push_back(s.to_physical(raw));
        p += 2;
      }
    }
  }
  return file;
}

File read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(std::as_bytes(std::span(buf)));
}

std::vector<std::byte> write(const std::vector<SignalData>& signals, const WriteOptions& opts) {
  if (signals.empty()) throw Error("EDF needs at least one signal");
  const std::size_t n = signals.size();

  std::vector<SignalHeader> hdrs(n);
  std::vector<std::string> pmin_text(n), pmax_text(n);
  std::int64_t n_records = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& sig = signals[i];
    auto& h = hdrs[i];
    const double spr = sig.fs * opts.record_duration_s;
    if (!(spr >= 1.0) || std::abs(spr - std::round(spr)) > 1e-6) {
      throw Error("signal '" + sig.label + "': fs * record duration must be a positive integer");
    }
    h.label = sig.label;
    h.physical_dimension = sig.physical_dimension;
    h.samples_per_record = std::llround(spr);
    h.digital_min = -32768;
    h.digital_max = 32767;
    double lo = sig.physical_min, hi = sig.physical_max;
    if (!(hi > lo)) {
      lo = sig.samples.empty() ? -1.0 : *std::min_element(sig.samples.begin(), sig.samples.end());
      hi = sig.samples.empty() ? 1.0 : *std::max_element(sig.samples.begin(), sig.samples.end());
      if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
      }
    }
    pmin_text[i] = fit8(lo, true);
    pmax_text[i] = fit8(hi, false);
    h.physical_min = std::stod(pmin_text[i]);
    h.physical_max = std::stod(pmax_text[i]);
    const auto spr_n = static_cast<std::size_t>(h.samples_per_record);
    n_records = std::max<std::int64_t>(
        n_records, static_cast<std::int64_t>((sig.samples.size() + spr_n - 1) / spr_n));
  }

  std::string header(kFixedHeader + kPerSignal * n, ' ');
  put(header, 0, 8, "0");
  put(header, 8, 80, opts.patient_id);
  put(header, 88, 80, opts.recording_id);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02d.%02d.%02d", opts.start.day, opts.start.month,
                opts.start.year % 100);
  put(header, 168, 8, buf);
  std::snprintf(buf, sizeof buf, "%02d.%02d.%02d", opts.start.hour, opts.start.minute,
                opts.start.second);
  put(header, 176, 8, buf);
  put(header, 184, 8, fmt_int(static_cast<std::int64_t>(header.size())));
  put(header, 236, 8, fmt_int(n_records));
  std::snprintf(buf, sizeof buf, "%g", opts.record_duration_s);
  put(header, 244, 8, buf);
  put(header, 252, 4, fmt_int(static_cast<std::int64_t>(n)));

  std::size_t off = kFixedHeader;
  auto column = [&](std::size_t width, auto value_of) {
    for (std::size_t i = 0; i < n; ++i) put(header, off + width * i, width, value_of(i));
    off += width * n;
  };
  column(16, [&](std::size_t i) { return hdrs[i].label; });
  column(80, [&](std::size_t i) { return hdrs[i].transducer; });
  column(8, [&](std::size_t i) { return hdrs[i].physical_dimension; });
  column(8, [&](std::size_t i) { return pmin_text[i]; });
  column(8, [&](std::size_t i) { return pmax_text[i]; });
  column(8, [&](std::size_t i) { return fmt_int(hdrs[i].digital_min); });
  column(8, [&](std::size_t i) { return fmt_int(hdrs[i].digital_max); });
  column(80, [&](std::size_t i) { return hdrs[i].prefiltering; });
  column(8, [&](std::size_t i) { return fmt_int(hdrs[i].samples_per_record); });

  std::vector<std::byte> out;
  out.reserve(header.size());
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  for (std::int64_t rec = 0; rec < n_records; ++rec) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& h = hdrs[i];
      const auto& samples = signals[i].samples;
      const double gain = (h.digital_max - h.digital_min) / (h.physical_max - h.physical_min);
      for (std::int64_t k = 0; k < h.samples_per_record; ++k) {
        const auto idx = static_cast<std::size_t>(rec * h.samples_per_record + k);
        const double v = samples.empty() ? 0.0 : samples[std::min(idx, samples.size() - 1)];
        const double d = std::round((v - h.physical_min) * gain + h.digital_min);
        const auto q = static_cast<std::int16_t>(
            std::clamp(d, static_cast<double>(h.digital_min), static_cast<double>(h.digital_max)));
        const auto u = static_cast<std::uint16_t>(q);
        out.push_back(static_cast<std::byte>(u & 0xff));
        out.push_back(static_cast<std::byte>(u >> 8));
      }
    }
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::vector<SignalData>& signals,
                const WriteOptions& opts) {
  const auto bytes = write(signals, opts);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace stimeeg::edf
