#pragma once

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "json.hpp"
#include "sdx/eeg/preprocess.hpp"

namespace sdx::spectral {

using eeg::Label;

enum class Origin { real, vae, wgan };

inline const char* origin_name(Origin o) {
  switch (o) {
    case Origin::real: return "real";
    case Origin::vae: return "vae";
    case Origin::wgan: return "wgan";
  }
  return "real";
}

inline Origin parse_origin(const std::string& s) {
  if (s == "real") return Origin::real;
  if (s == "vae") return Origin::vae;
  if (s == "wgan") return Origin::wgan;
  throw DataError("unknown origin '" + s + "'");
}

struct Provenance {
  std::string subject_id;
  int segment_index = 0;
  Origin origin = Origin::real;
};

// F x T power image, row-major with frequency along rows.
struct Spectrogram {
  int freq_bins = 0;
  int time_frames = 0;
  std::vector<float> values;
  Provenance provenance;
  Label label = Label::norm;

  float at(int f, int t) const { return values[static_cast<std::size_t>(f) * time_frames + t]; }
};

struct StftConfig {
  int nfft = 1022;
  int nperseg = 360;
  int noverlap = 45;
  double tukey_alpha = 0.25;
  bool periodic_window = true;  // DFT-even window, as spectral estimators use by default
  bool detrend_constant = false;

  int freq_bins() const { return nfft / 2 + 1; }
  int hop() const { return nperseg - noverlap; }
  long frames(long length) const { return length < nperseg ? 0 : 1 + (length - nperseg) / hop(); }

  void validate() const {
    if (nperseg <= 0 || nfft <= 0) throw ConfigError("STFT nperseg and nfft must be positive");
    if (nperseg > nfft)
      throw ConfigError("STFT nperseg " + std::to_string(nperseg) + " exceeds nfft " + std::to_string(nfft));
    if (noverlap < 0 || noverlap >= nperseg)
      throw ConfigError("STFT noverlap " + std::to_string(noverlap) + " outside [0, nperseg)");
    if (!(tukey_alpha >= 0 && tukey_alpha <= 1)) throw ConfigError("Tukey alpha must lie in [0, 1]");
  }

  nlohmann::json to_json() const {
    return {{"nfft", nfft},
            {"nperseg", nperseg},
            {"noverlap", noverlap},
            {"window", "tukey"},
            {"tukey_alpha", tukey_alpha},
            {"periodic_window", periodic_window},
            {"detrend_constant", detrend_constant}};
  }
};

// Symmetric Tukey window of length m.
inline std::vector<double> tukey_symmetric(int m, double alpha) {
  std::vector<double> w(static_cast<std::size_t>(m), 1.0);
  if (m == 1 || alpha <= 0) return w;
  if (alpha >= 1) {
    for (int n = 0; n < m; ++n) w[n] = 0.5 * (1 - std::cos(2 * std::numbers::pi * n / (m - 1)));
    return w;
  }
  const double span = alpha * (m - 1) / 2.0;
  const int width = static_cast<int>(std::floor(span));
  for (int n = 0; n <= width; ++n) {
    const double v = 0.5 * (1 + std::cos(std::numbers::pi * (-1 + n / span)));
    w[n] = v;
    w[m - 1 - n] = v;
  }
  return w;
}

inline std::vector<double> stft_window(const StftConfig& cfg) {
  if (!cfg.periodic_window) return tukey_symmetric(cfg.nperseg, cfg.tukey_alpha);
  auto w = tukey_symmetric(cfg.nperseg + 1, cfg.tukey_alpha);
  w.pop_back();
  return w;
}

namespace detail {

inline bool smooth_length(int n) {
  for (int p : {2, 3, 5})
    while (n % p == 0) n /= p;
  return n == 1;
}

// Exact length-n DFT. Lengths with a large prime factor (1022 = 2*7*73) go
// through Bluestein's chirp-z transform on power-of-two FFTs.
class Dft {
 public:
  explicit Dft(int n) : n_(n), z_(static_cast<std::size_t>(n)) {
    if (smooth_length(n)) return;
    m_ = 1;
    while (m_ < 2 * n - 1) m_ *= 2;
    chirp_.resize(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k) {
      const long k2 = (k * k) % (2L * n);
      chirp_[static_cast<std::size_t>(k)] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / n);
    }
    std::vector<std::complex<double>> b(static_cast<std::size_t>(m_));
    b[0] = std::conj(chirp_[0]);
    for (int k = 1; k < n; ++k) b[static_cast<std::size_t>(k)] = b[static_cast<std::size_t>(m_ - k)] = std::conj(chirp_[static_cast<std::size_t>(k)]);
    fft_.fwd(kernel_, b);
    a_.resize(static_cast<std::size_t>(m_));
  }

  // Power spectra |X1[k]|^2, |X2[k]|^2 (k < bins) of two real length-n
  // signals, taken from one complex transform of x1 + i x2.
  void power_pair(const std::vector<double>& x1, const std::vector<double>& x2, std::vector<double>& p1,
                  std::vector<double>& p2, int bins) {
    for (int k = 0; k < n_; ++k) z_[static_cast<std::size_t>(k)] = {x1[static_cast<std::size_t>(k)], x2[static_cast<std::size_t>(k)]};
    transform();
    p1.resize(static_cast<std::size_t>(bins));
    p2.resize(static_cast<std::size_t>(bins));
    for (int k = 0; k < bins; ++k) {
      const auto zk = out_[static_cast<std::size_t>(k)];
      const auto zn = std::conj(out_[static_cast<std::size_t>((n_ - k) % n_)]);
      p1[static_cast<std::size_t>(k)] = std::norm(0.5 * (zk + zn));
      p2[static_cast<std::size_t>(k)] = std::norm(std::complex<double>(0, -0.5) * (zk - zn));
    }
  }

 private:
  void transform() {
    if (chirp_.empty()) {
      fft_.fwd(out_, z_);
      return;
    }
    std::fill(a_.begin(), a_.end(), std::complex<double>());
    for (int k = 0; k < n_; ++k) a_[static_cast<std::size_t>(k)] = z_[static_cast<std::size_t>(k)] * chirp_[static_cast<std::size_t>(k)];
    fft_.fwd(spec_, a_);
    for (std::size_t k = 0; k < spec_.size(); ++k) spec_[k] *= kernel_[k];
    fft_.inv(a_, spec_);
    out_.resize(static_cast<std::size_t>(n_));
    for (int k = 0; k < n_; ++k) out_[static_cast<std::size_t>(k)] = a_[static_cast<std::size_t>(k)] * chirp_[static_cast<std::size_t>(k)];
  }

 private:
  int n_;
  int m_ = 0;
  Eigen::FFT<double> fft_;
  std::vector<std::complex<double>> z_, out_, chirp_, kernel_, a_, spec_;
};

}  // namespace detail

// One-sided |FFT|^2 of each windowed, zero-padded frame.
inline Spectrogram stft_spectrogram(const std::vector<double>& x, const StftConfig& cfg) {
  cfg.validate();
  if (static_cast<long>(x.size()) < cfg.nperseg)
    throw DataError("segment of " + std::to_string(x.size()) + " samples is shorter than nperseg " +
                    std::to_string(cfg.nperseg));
  const auto window = stft_window(cfg);
  const int F = cfg.freq_bins();
  const long T = cfg.frames(static_cast<long>(x.size()));
  Spectrogram s;
  s.freq_bins = F;
  s.time_frames = static_cast<int>(T);
  s.values.assign(static_cast<std::size_t>(F) * T, 0.0f);

  detail::Dft fft(cfg.nfft);
  std::vector<double> a(static_cast<std::size_t>(cfg.nfft)), b(a.size()), pa, pb;
  auto fill = [&](long t, std::vector<double>& frame) {
    std::fill(frame.begin(), frame.end(), 0.0);
    if (t >= T) return;
    const auto* src = x.data() + t * cfg.hop();
    double mean = 0;
    if (cfg.detrend_constant) {
      for (int n = 0; n < cfg.nperseg; ++n) mean += src[n];
      mean /= cfg.nperseg;
    }
    for (int n = 0; n < cfg.nperseg; ++n) frame[static_cast<std::size_t>(n)] = (src[n] - mean) * window[static_cast<std::size_t>(n)];
  };
  for (long t = 0; t < T; t += 2) {
    fill(t, a);
    fill(t + 1, b);
    fft.power_pair(a, b, pa, pb, F);
    for (int f = 0; f < F; ++f) {
      s.values[static_cast<std::size_t>(f) * T + t] = static_cast<float>(pa[static_cast<std::size_t>(f)]);
      if (t + 1 < T) s.values[static_cast<std::size_t>(f) * T + t + 1] = static_cast<float>(pb[static_cast<std::size_t>(f)]);
    }
  }
  return s;
}

inline Spectrogram stft_spectrogram(const eeg::SegmentVector& seg, const StftConfig& cfg) {
  auto s = stft_spectrogram(seg.data, cfg);
  s.provenance = {seg.subject_id, seg.segment_index, Origin::real};
  s.label = seg.label;
  return s;
}

// log10(v + 1e-12), then min-max to [0, 1]; a constant image maps to zeros.
inline void log_normalize_inplace(std::vector<float>& v) {
  if (v.empty()) return;
  std::vector<double> l(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0)) throw DataError("log_normalize needs nonnegative finite values");
    l[i] = std::log10(static_cast<double>(v[i]) + 1e-12);
  }
  const auto [lo, hi] = std::minmax_element(l.begin(), l.end());
  const double a = *lo, range = *hi - *lo;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = range > 0 ? static_cast<float>((l[i] - a) / range) : 0.0f;
}

inline Spectrogram log_normalize(Spectrogram s) {
  log_normalize_inplace(s.values);
  return s;
}

// Bilinear resize on a corner-aligned grid (output corners sample input corners).
inline std::vector<float> resize_bilinear(const float* src, int h, int w, int oh, int ow) {
  if (h < 2 || w < 2) throw DimensionError("resize_bilinear needs a source of at least 2x2");
  std::vector<float> out(static_cast<std::size_t>(oh) * ow);
  const double sy = oh > 1 ? static_cast<double>(h - 1) / (oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(w - 1) / (ow - 1) : 0.0;
  for (int i = 0; i < oh; ++i) {
    const double y = i * sy;
    const int y0 = std::min(static_cast<int>(y), h - 2);
    const double fy = y - y0;
    for (int j = 0; j < ow; ++j) {
      const double x = j * sx;
      const int x0 = std::min(static_cast<int>(x), w - 2);
      const double fx = x - x0;
      const double a = src[y0 * w + x0], b = src[y0 * w + x0 + 1];
      const double c = src[(y0 + 1) * w + x0], d = src[(y0 + 1) * w + x0 + 1];
      out[static_cast<std::size_t>(i) * ow + j] =
          static_cast<float>((1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d));
    }
  }
  return out;
}

inline Spectrogram resize_bilinear(const Spectrogram& s, int oh = 128, int ow = 128) {
  Spectrogram r;
  r.freq_bins = oh;
  r.time_frames = ow;
  r.values = resize_bilinear(s.values.data(), s.freq_bins, s.time_frames, oh, ow);
  r.provenance = s.provenance;
  r.label = s.label;
  return r;
}

}  // namespace sdx::spectral
