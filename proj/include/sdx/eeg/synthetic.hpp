#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

#include "sdx/core/rng.hpp"
#include "sdx/eeg/column_text.hpp"
#include "sdx/eeg/edf.hpp"

namespace sdx::eeg {

// Two-class toy corpus: every channel is AR(1) background noise plus a
// random-phase narrowband component whose amplitude depends on the class.
struct BandPowerToy {
  double band_lo_hz = 8.0;
  double band_hi_hz = 12.0;
  double norm_amplitude = 0.2;
  double sch_amplitude = 1.5;
  double noise_std = 1.0;
  double ar_coefficient = 0.9;
  int tones = 8;
};

inline SubjectRecording make_band_power_subject(const std::string& id, Label label, int rate_hz, int channels,
                                                long samples, std::uint64_t seed, const BandPowerToy& toy = {}) {
  Rng rng(seed);
  SubjectRecording rec;
  rec.subject_id = id;
  rec.label = label;
  rec.sampling_rate_hz = rate_hz;
  for (int c = 0; c < channels; ++c)
    rec.channels.push_back(channels == 16 ? std::string(kChannels16[static_cast<std::size_t>(c)])
                           : channels == 19 ? std::string(kChannels19[static_cast<std::size_t>(c)])
                                            : "C" + std::to_string(c + 1));
  const double amp = label == Label::sch ? toy.sch_amplitude : toy.norm_amplitude;
  rec.samples.assign(static_cast<std::size_t>(channels), std::vector<double>(static_cast<std::size_t>(samples)));
  for (auto& ch : rec.samples) {
    std::vector<double> f(static_cast<std::size_t>(toy.tones)), ph(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
      f[k] = rng.uniform(toy.band_lo_hz, toy.band_hi_hz);
      ph[k] = rng.uniform(0, 2 * std::numbers::pi);
    }
    double ar = 0;
    for (long t = 0; t < samples; ++t) {
      ar = toy.ar_coefficient * ar + toy.noise_std * rng.normal();
      double band = 0;
      for (std::size_t k = 0; k < f.size(); ++k)
        band += std::sin(2 * std::numbers::pi * f[k] * static_cast<double>(t) / rate_hz + ph[k]);
      ch[static_cast<std::size_t>(t)] = 20.0 * (ar + amp * band / std::sqrt(static_cast<double>(f.size())));
    }
  }
  return rec;
}

// Writes <root>/norm/<i>.txt and <root>/sch/<i>.txt (16 channels, 128 Hz,
// 7680 samples), or 19-channel 250 Hz EDF files when `edf` is set.
inline void write_band_power_corpus(const std::string& root, int subjects_per_class, bool edf, std::uint64_t seed,
                                    const BandPowerToy& toy = {}, long edf_samples = 185000) {
  namespace fs = std::filesystem;
  Rng seeds(seed);
  for (Label l : {Label::norm, Label::sch}) {
    const fs::path dir = fs::path(root) / label_name(l);
    fs::create_directories(dir);
    for (int i = 0; i < subjects_per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%s%02d", l == Label::norm ? "h" : "s", i + 1);
      const auto s = seeds.next_u64();
      if (edf) {
        write_edf((dir / (std::string(name) + ".edf")).string(),
                  make_band_power_subject(name, l, 250, 19, edf_samples, s, toy));
      } else {
        write_column_text((dir / (std::string(name) + ".txt")).string(),
                          make_band_power_subject(name, l, 128, 16, 7680, s, toy));
      }
    }
  }
}

}  // namespace sdx::eeg
