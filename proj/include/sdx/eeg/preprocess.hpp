#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sdx/eeg/recording.hpp"

namespace sdx::eeg {

struct DegenerateChannelError : DataError {
  DegenerateChannelError(const std::string& what, std::string channel) : DataError(what), channel(std::move(channel)) {}
  std::string channel;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population (1/N)
};

struct SegmentVector {
  std::string subject_id;
  int segment_index = 0;
  Label label = Label::norm;
  std::vector<double> data;
};

// Per-channel z-score over the whole recording.
inline std::pair<SubjectRecording, NormalizationStats> zscore_normalize(SubjectRecording rec) {
  rec.validate();
  NormalizationStats st;
  for (std::size_t c = 0; c < rec.num_channels(); ++c) {
    auto& x = rec.samples[c];
    if (x.empty()) throw DataError(rec.subject_id + ": channel " + rec.channels[c] + " is empty");
    const double n = static_cast<double>(x.size());
    double mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    if (!(sd > 0) || !std::isfinite(sd))
      throw DegenerateChannelError(rec.subject_id + ": channel " + rec.channels[c] + " has zero variance",
                                   rec.channels[c]);
    for (double& v : x) v = (v - mean) / sd;
    // Second pass removes the O(eps * |mean| / sd) residual left by the first.
    double m2 = 0;
    for (double v : x) m2 += v;
    m2 /= n;
    if (m2 != 0)
      for (double& v : x) v -= m2;
    st.mean.push_back(mean);
    st.stddev.push_back(sd);
  }
  return {std::move(rec), std::move(st)};
}

inline long segment_window(const SubjectRecording& rec) { return static_cast<long>(kSegmentSeconds) * rec.sampling_rate_hz; }

inline long segment_count(long T, int rate_hz) { return T / (static_cast<long>(kSegmentSeconds) * rate_hz); }

// Non-overlapping 5 s windows, each flattened channel-major; the tail that
// does not fill a window is dropped.
inline std::vector<SegmentVector> segment_and_concat(const SubjectRecording& rec) {
  rec.validate();
  const long W = segment_window(rec);
  const long T = rec.length();
  if (T < W)
    throw DataError(rec.subject_id + ": " + std::to_string(T) + " samples is shorter than one " +
                    std::to_string(kSegmentSeconds) + " s segment (" + std::to_string(W) + ")");
  const long n = T / W;
  std::vector<SegmentVector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long s = 0; s < n; ++s) {
    SegmentVector sv;
    sv.subject_id = rec.subject_id;
    sv.segment_index = static_cast<int>(s);
    sv.label = rec.label;
    sv.data.reserve(rec.num_channels() * static_cast<std::size_t>(W));
    for (const auto& ch : rec.samples) sv.data.insert(sv.data.end(), ch.begin() + s * W, ch.begin() + (s + 1) * W);
    out.push_back(std::move(sv));
  }
  return out;
}

}  // namespace sdx::eeg
