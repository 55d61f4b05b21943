#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sdx/core/error.hpp"

namespace sdx::eeg {

// Class labels; schizophrenia is the positive class.
enum class Label : int { norm = 0, sch = 1 };

inline const char* label_name(Label l) { return l == Label::norm ? "norm" : "sch"; }

inline Label parse_label(std::string_view s) {
  if (s == "norm") return Label::norm;
  if (s == "sch") return Label::sch;
  throw DataError("unknown label '" + std::string(s) + "' (expected norm or sch)");
}

inline const std::array<std::string_view, 16> kChannels16 = {"F7", "F3", "F4", "F8", "T3", "C3", "Cz", "C4",
                                                            "T4", "T5", "P3", "Pz", "P4", "T6", "O1", "O2"};
inline const std::array<std::string_view, 19> kChannels19 = {"Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
                                                            "T3",  "C3",  "Cz", "C4", "T4", "T5", "P3",
                                                            "Pz",  "P4",  "T6", "O1", "O2"};

inline constexpr int kSegmentSeconds = 5;

// One subject: channels x T samples (microvolts or z-scores after
// normalization).
struct SubjectRecording {
  std::string subject_id;
  Label label = Label::norm;
  int sampling_rate_hz = 128;
  std::vector<std::string> channels;
  std::vector<std::vector<double>> samples;

  std::size_t num_channels() const { return samples.size(); }
  std::int64_t length() const { return samples.empty() ? 0 : static_cast<std::int64_t>(samples.front().size()); }

  void validate() const {
    if (sampling_rate_hz != 128 && sampling_rate_hz != 250)
      throw DataError(subject_id + ": sampling rate " + std::to_string(sampling_rate_hz) + " Hz is not 128 or 250");
    if (channels.size() != samples.size())
      throw DataError(subject_id + ": " + std::to_string(channels.size()) + " channel names for " +
                      std::to_string(samples.size()) + " channels");
    for (std::size_t c = 0; c < samples.size(); ++c)
      if (samples[c].size() != samples.front().size())
        throw DataError(subject_id + ": channel " + channels[c] + " has " + std::to_string(samples[c].size()) +
                        " samples, expected " + std::to_string(samples.front().size()));
  }
};

// Warnings for channels whose names differ from the expected montage order.
template <std::size_t N>
std::vector<std::string> channel_order_warnings(const SubjectRecording& rec,
                                                const std::array<std::string_view, N>& expected) {
  std::vector<std::string> out;
  auto norm = [](std::string s) {
    if (s.rfind("EEG ", 0) == 0) s = s.substr(4);
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
  };
  if (rec.channels.size() != N) {
    out.push_back(rec.subject_id + ": " + std::to_string(rec.channels.size()) + " channels, montage lists " +
                  std::to_string(N));
    return out;
  }
  for (std::size_t i = 0; i < N; ++i)
    if (norm(rec.channels[i]) != norm(std::string(expected[i])))
      out.push_back(rec.subject_id + ": channel " + std::to_string(i) + " is '" + rec.channels[i] + "', expected '" +
                    std::string(expected[i]) + "'");
  return out;
}

}  // namespace sdx::eeg
