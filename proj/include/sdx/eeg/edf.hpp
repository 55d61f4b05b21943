#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "sdx/eeg/recording.hpp"

namespace sdx::eeg {

struct EdfHeaderError : DataError {
  using DataError::DataError;
};
struct EdfRecordCountError : DataError {
  using DataError::DataError;
};
struct EdfChannelCountError : DataError {
  using DataError::DataError;
};

struct EdfSignalHeader {
  std::string label;
  std::string physical_dimension = "uV";
  double physical_min = 0, physical_max = 0;
  long digital_min = -32768, digital_max = 32767;
  long samples_per_record = 0;
};

struct EdfHeader {
  std::string patient, recording;
  long header_bytes = 0;
  long num_records = 0;
  double record_duration_s = 1.0;
  std::vector<EdfSignalHeader> signals;
};

struct EdfReadOptions {
  int expected_channels = 19;
  int expected_rate_hz = 250;
  long max_samples = 185000;  // 0 keeps everything
};

namespace detail {

inline std::string edf_field(const std::string& buf, std::size_t off, std::size_t len) {
  auto s = buf.substr(off, len);
  const auto e = s.find_last_not_of(' ');
  return e == std::string::npos ? std::string() : s.substr(0, e + 1);
}

inline double edf_number(const std::string& field, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw EdfHeaderError("EDF header field '" + what + "' is not numeric: '" + field + "'");
  }
  if (used != field.size()) throw EdfHeaderError("EDF header field '" + what + "' is not numeric: '" + field + "'");
  return v;
}

inline long edf_integer(const std::string& field, const std::string& what) {
  const double v = edf_number(field, what);
  if (v != std::floor(v)) throw EdfHeaderError("EDF header field '" + what + "' is not an integer: '" + field + "'");
  return static_cast<long>(v);
}

inline void put_field(std::string& out, const std::string& value, std::size_t len) {
  if (value.size() > len) throw DataError("EDF field value '" + value + "' exceeds " + std::to_string(len) + " bytes");
  out += value;
  out.append(len - value.size(), ' ');
}

inline std::string fmt_number(double v, std::size_t len) {
  char buf[32];
  for (int prec = 8; prec >= 1; --prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::string(buf).size() <= len) return buf;
  }
  throw DataError("cannot fit " + std::to_string(v) + " into an EDF field");
}

}  // namespace detail

inline EdfHeader parse_edf_header(const std::string& bytes) {
  using namespace detail;
  if (bytes.size() < 256) throw EdfHeaderError("EDF file shorter than the 256-byte fixed header");
  if (bytes.compare(0, 8, "0       ") != 0) throw EdfHeaderError("EDF version field is not '0'");
  EdfHeader h;
  h.patient = edf_field(bytes, 8, 80);
  h.recording = edf_field(bytes, 88, 80);
  h.header_bytes = edf_integer(edf_field(bytes, 184, 8), "header bytes");
  h.num_records = edf_integer(edf_field(bytes, 236, 8), "number of data records");
  h.record_duration_s = edf_number(edf_field(bytes, 244, 8), "record duration");
  const long ns = edf_integer(edf_field(bytes, 252, 4), "number of signals");
  if (ns <= 0) throw EdfHeaderError("EDF header declares " + std::to_string(ns) + " signals");
  if (h.header_bytes != 256 + 256 * ns)
    throw EdfHeaderError("EDF header size " + std::to_string(h.header_bytes) + " inconsistent with " +
                         std::to_string(ns) + " signals");
  if (static_cast<long>(bytes.size()) < h.header_bytes) throw EdfHeaderError("EDF signal headers truncated");
  if (h.record_duration_s <= 0) throw EdfHeaderError("EDF record duration must be positive");

  h.signals.resize(static_cast<std::size_t>(ns));
  std::size_t off = 256;
  auto column = [&](std::size_t width, auto&& assign) {
    for (long i = 0; i < ns; ++i) assign(h.signals[static_cast<std::size_t>(i)], edf_field(bytes, off + i * width, width));
    off += ns * width;
  };
  column(16, [](auto& s, const std::string& f) { s.label = f; });
  column(80, [](auto&, const std::string&) {});
  column(8, [](auto& s, const std::string& f) { s.physical_dimension = f; });
  column(8, [](auto& s, const std::string& f) { s.physical_min = edf_number(f, "physical minimum"); });
  column(8, [](auto& s, const std::string& f) { s.physical_max = edf_number(f, "physical maximum"); });
  column(8, [](auto& s, const std::string& f) { s.digital_min = edf_integer(f, "digital minimum"); });
  column(8, [](auto& s, const std::string& f) { s.digital_max = edf_integer(f, "digital maximum"); });
  column(80, [](auto&, const std::string&) {});
  column(8, [](auto& s, const std::string& f) { s.samples_per_record = edf_integer(f, "samples per record"); });
  for (const auto& s : h.signals) {
    if (s.digital_max <= s.digital_min) throw EdfHeaderError("EDF signal '" + s.label + "' has digital max <= min");
    if (s.samples_per_record <= 0) throw EdfHeaderError("EDF signal '" + s.label + "' has no samples per record");
  }
  return h;
}

// Physical value for one digital sample.
inline double edf_physical(const EdfSignalHeader& s, long digital) {
  return (static_cast<double>(digital) - static_cast<double>(s.digital_min)) * (s.physical_max - s.physical_min) /
             static_cast<double>(s.digital_max - s.digital_min) +
         s.physical_min;
}

inline SubjectRecording parse_edf(const std::string& bytes, const std::string& subject_id, Label label,
                                  const EdfReadOptions& opt = {}) {
  const EdfHeader h = parse_edf_header(bytes);
  long record_bytes = 0;
  for (const auto& s : h.signals) record_bytes += 2 * s.samples_per_record;
  const long data_bytes = static_cast<long>(bytes.size()) - h.header_bytes;
  if (h.num_records < 0 || data_bytes != h.num_records * record_bytes)
    throw EdfRecordCountError("EDF declares " + std::to_string(h.num_records) + " records of " +
                              std::to_string(record_bytes) + " bytes but carries " + std::to_string(data_bytes) +
                              " data bytes");

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < h.signals.size(); ++i)
    if (h.signals[i].label.find("Annotations") == std::string::npos) keep.push_back(i);
  if (static_cast<int>(keep.size()) != opt.expected_channels)
    throw EdfChannelCountError("EDF has " + std::to_string(keep.size()) + " signal channels, expected " +
                               std::to_string(opt.expected_channels));
  const long spr = h.signals[keep.front()].samples_per_record;
  for (auto i : keep)
    if (h.signals[i].samples_per_record != spr)
      throw EdfHeaderError("EDF channels have differing sample rates ('" + h.signals[i].label + "')");
  const double rate = static_cast<double>(spr) / h.record_duration_s;
  if (std::abs(rate - opt.expected_rate_hz) > 1e-9)
    throw EdfHeaderError("EDF sampling rate " + std::to_string(rate) + " Hz, expected " +
                         std::to_string(opt.expected_rate_hz));

  const long total = h.num_records * spr;
  const long keep_len = opt.max_samples > 0 ? std::min(total, opt.max_samples) : total;
  SubjectRecording rec;
  rec.subject_id = subject_id;
  rec.label = label;
  rec.sampling_rate_hz = opt.expected_rate_hz;
  for (auto i : keep) rec.channels.push_back(h.signals[i].label);
  rec.samples.assign(keep.size(), std::vector<double>(static_cast<std::size_t>(keep_len)));

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + h.header_bytes;
  for (long r = 0; r < h.num_records && r * spr < keep_len; ++r) {
    std::size_t out_c = 0;
    for (std::size_t i = 0; i < h.signals.size(); ++i) {
      const auto& sig = h.signals[i];
      const bool wanted = out_c < keep.size() && keep[out_c] == i;
      if (wanted) {
        auto& dst = rec.samples[out_c];
        for (long k = 0; k < sig.samples_per_record; ++k) {
          const long t = r * spr + k;
          if (t >= keep_len) break;
          const auto d = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[2 * k] | (p[2 * k + 1] << 8)));
          dst[static_cast<std::size_t>(t)] = edf_physical(sig, d);
        }
        ++out_c;
      }
      p += 2 * sig.samples_per_record;
    }
  }
  return rec;
}

inline SubjectRecording read_edf(const std::string& path, const std::string& subject_id, Label label,
                                 const EdfReadOptions& opt = {}) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return parse_edf(bytes, subject_id, label, opt);
  } catch (EdfHeaderError& e) {
    throw EdfHeaderError(path + ": " + e.what());
  } catch (EdfRecordCountError& e) {
    throw EdfRecordCountError(path + ": " + e.what());
  } catch (EdfChannelCountError& e) {
    throw EdfChannelCountError(path + ": " + e.what());
  }
}

// Writes 1-second records; each channel's physical range is its own min/max
// (widened when flat) quantized onto the full int16 range.
inline std::string serialize_edf(const SubjectRecording& rec) {
  using detail::fmt_number;
  using detail::put_field;
  rec.validate();
  const long rate = rec.sampling_rate_hz;
  const long T = rec.length();
  if (T == 0 || T % rate != 0)
    throw DataError("EDF writer needs a whole number of seconds; got " + std::to_string(T) + " samples at " +
                    std::to_string(rate) + " Hz");
  const long ns = static_cast<long>(rec.num_channels());
  std::vector<EdfSignalHeader> sig(static_cast<std::size_t>(ns));
  for (long c = 0; c < ns; ++c) {
    const auto& x = rec.samples[static_cast<std::size_t>(c)];
    auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    auto& s = sig[static_cast<std::size_t>(c)];
    s.label = rec.channels[static_cast<std::size_t>(c)];
    s.physical_min = std::floor(*lo) - 1;
    s.physical_max = std::ceil(*hi) + 1;
    // Round-trip the text form so the quantizer uses what the reader will see.
    s.physical_min = std::stod(fmt_number(s.physical_min, 8));
    s.physical_max = std::stod(fmt_number(s.physical_max, 8));
    s.samples_per_record = rate;
  }

  std::string out;
  put_field(out, "0", 8);
  put_field(out, rec.subject_id, 80);
  put_field(out, "Startdate X X X X", 80);
  put_field(out, "01.01.00", 8);
  put_field(out, "00.00.00", 8);
  put_field(out, std::to_string(256 + 256 * ns), 8);
  put_field(out, "", 44);
  put_field(out, std::to_string(T / rate), 8);
  put_field(out, "1", 8);
  put_field(out, std::to_string(ns), 4);
  for (auto& s : sig) put_field(out, s.label, 16);
  for (long c = 0; c < ns; ++c) put_field(out, "AgAgCl electrode", 80);
  for (auto& s : sig) put_field(out, s.physical_dimension, 8);
  for (auto& s : sig) put_field(out, fmt_number(s.physical_min, 8), 8);
  for (auto& s : sig) put_field(out, fmt_number(s.physical_max, 8), 8);
  for (auto& s : sig) put_field(out, std::to_string(s.digital_min), 8);
  for (auto& s : sig) put_field(out, std::to_string(s.digital_max), 8);
  for (long c = 0; c < ns; ++c) put_field(out, "", 80);
  for (auto& s : sig) put_field(out, std::to_string(s.samples_per_record), 8);
  for (long c = 0; c < ns; ++c) put_field(out, "", 32);

  out.reserve(out.size() + static_cast<std::size_t>(2 * ns * T));
  for (long r = 0; r < T / rate; ++r)
    for (long c = 0; c < ns; ++c) {
      const auto& s = sig[static_cast<std::size_t>(c)];
      const double scale = static_cast<double>(s.digital_max - s.digital_min) / (s.physical_max - s.physical_min);
      for (long k = 0; k < rate; ++k) {
        const double v = rec.samples[static_cast<std::size_t>(c)][static_cast<std::size_t>(r * rate + k)];
        long d = std::lround((v - s.physical_min) * scale + static_cast<double>(s.digital_min));
        d = std::clamp(d, s.digital_min, s.digital_max);
        const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(d));
        out.push_back(static_cast<char>(u & 0xFF));
        out.push_back(static_cast<char>(u >> 8));
      }
    }
  return out;
}

inline void write_edf(const std::string& path, const SubjectRecording& rec) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  const auto bytes = serialize_edf(rec);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing '" + path + "'");
}

}  // namespace sdx::eeg
