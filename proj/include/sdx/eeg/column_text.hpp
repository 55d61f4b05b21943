#pragma once

#include <charconv>
#include <fstream>
#include <string>

#include "sdx/eeg/recording.hpp"

namespace sdx::eeg {

struct TextFormatError : DataError {
  using DataError::DataError;
};

struct TextParseError : DataError {
  TextParseError(const std::string& what, long line) : DataError(what), line(line) {}
  long line;
};

struct ColumnTextLayout {
  int channels = 16;
  long samples_per_channel = 7680;
  int sampling_rate_hz = 128;
};

namespace detail {
inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}
}  // namespace detail

// Single numeric column, channel after channel: line c*T + t is sample t of
// channel c. Blank lines after the last value are tolerated.
inline SubjectRecording read_column_text(const std::string& path, const std::string& subject_id, Label label,
                                         const ColumnTextLayout& layout = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  const long expected = layout.channels * layout.samples_per_channel;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(expected));
  std::string line;
  long lineno = 0, blank_tail = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = detail::trim(line);
    if (tok.empty()) {
      ++blank_tail;
      continue;
    }
    if (blank_tail) throw TextParseError(path + ":" + std::to_string(lineno - blank_tail) + ": empty line", lineno - blank_tail);
    double v = 0;
    const char* first = tok.data();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw TextParseError(path + ":" + std::to_string(lineno) + ": not a number: '" + std::string(tok) + "'", lineno);
    values.push_back(v);
  }
  if (static_cast<long>(values.size()) != expected)
    throw TextFormatError(path + ": expected " + std::to_string(expected) + " numeric lines (" +
                          std::to_string(layout.channels) + "x" + std::to_string(layout.samples_per_channel) +
                          "), found " + std::to_string(values.size()));

  SubjectRecording rec;
  rec.subject_id = subject_id;
  rec.label = label;
  rec.sampling_rate_hz = layout.sampling_rate_hz;
  rec.samples.resize(static_cast<std::size_t>(layout.channels));
  for (int c = 0; c < layout.channels; ++c) {
    rec.channels.push_back(c < 16 && layout.channels == 16 ? std::string(kChannels16[c]) : "ch" + std::to_string(c));
    const auto off = values.begin() + static_cast<long>(c) * layout.samples_per_channel;
    rec.samples[c].assign(off, off + layout.samples_per_channel);
  }
  return rec;
}

inline void write_column_text(const std::string& path, const SubjectRecording& rec) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  char buf[64];
  for (const auto& ch : rec.samples)
    for (double v : ch) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      *p = '\n';
      out.write(buf, p - buf + 1);
    }
  if (!out) throw DataError("failed writing '" + path + "'");
}

}  // namespace sdx::eeg
