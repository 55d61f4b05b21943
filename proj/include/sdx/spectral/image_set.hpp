#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "sdx/autodiff/tensor.hpp"
#include "sdx/spectral/stft.hpp"

namespace sdx::spectral {

// N single-channel images of equal size stored contiguously, with per-item
// provenance and label.
struct ImageSet {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
  std::vector<Provenance> provenance;
  std::vector<Label> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::size_t image_size() const { return static_cast<std::size_t>(height) * width; }
  const float* image(std::size_t i) const { return pixels.data() + i * image_size(); }
  float* image(std::size_t i) { return pixels.data() + i * image_size(); }

  void reserve(std::size_t n) {
    pixels.reserve(n * image_size());
    provenance.reserve(n);
    labels.reserve(n);
  }

  void push(const float* img, int h, int w, const Provenance& p, Label l) {
    if (empty() && height == 0) {
      height = h;
      width = w;
    }
    if (h != height || w != width)
      throw DimensionError("image " + std::to_string(h) + "x" + std::to_string(w) + " does not match set size " +
                           std::to_string(height) + "x" + std::to_string(width));
    pixels.insert(pixels.end(), img, img + image_size());
    provenance.push_back(p);
    labels.push_back(l);
  }

  void push(const Spectrogram& s) { push(s.values.data(), s.freq_bins, s.time_frames, s.provenance, s.label); }

  void append(const ImageSet& o) {
    for (std::size_t i = 0; i < o.size(); ++i) push(o.image(i), o.height, o.width, o.provenance[i], o.labels[i]);
  }

  ImageSet subset(const std::vector<std::size_t>& idx) const {
    ImageSet out;
    out.height = height;
    out.width = width;
    out.reserve(idx.size());
    for (auto i : idx) out.push(image(i), height, width, provenance[i], labels[i]);
    return out;
  }

  std::vector<std::size_t> indices_of(Label l) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < size(); ++i)
      if (labels[i] == l) out.push_back(i);
    return out;
  }

  std::size_t count(Label l) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), l)); }

  // [n, H, W, 1] batch for the given items; pixels mapped through a*v + b.
  template <class T>
  Tensor<T> batch(const std::vector<std::size_t>& idx, double a = 1.0, double b = 0.0) const {
    Tensor<T> t(Shape{static_cast<std::int64_t>(idx.size()), height, width, 1});
    const auto n = image_size();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const float* src = image(idx[k]);
      for (std::size_t p = 0; p < n; ++p) t[k * n + p] = static_cast<T>(a * src[p] + b);
    }
    return t;
  }

  std::string key(std::size_t i) const {
    return provenance[i].subject_id + "#" + std::to_string(provenance[i].segment_index) + "#" +
           origin_name(provenance[i].origin);
  }
};

// Every image bilinearly resized (corner-aligned) to oh x ow.
inline ImageSet resize_set(const ImageSet& in, int oh, int ow) {
  if (in.height == oh && in.width == ow) return in;
  ImageSet out;
  out.height = oh;
  out.width = ow;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const auto img = resize_bilinear(in.image(i), in.height, in.width, oh, ow);
    out.push(img.data(), oh, ow, in.provenance[i], in.labels[i]);
  }
  return out;
}

struct SpectrogramDataset {
  ImageSet classifier;  // resized inputs
  ImageSet generative;  // native size
};

// Accumulates both representations segment by segment.
class SpectrogramBuilder {
 public:
  explicit SpectrogramBuilder(StftConfig cfg = {}, int out_h = 128, int out_w = 128)
      : cfg_(std::move(cfg)), out_h_(out_h), out_w_(out_w) {
    cfg_.validate();
  }

  void add(const eeg::SegmentVector& seg) {
    auto native = log_normalize(stft_spectrogram(seg, cfg_));
    ds_.classifier.push(resize_bilinear(native, out_h_, out_w_));
    ds_.generative.push(native);
  }

  void add(const std::vector<eeg::SegmentVector>& segs) {
    for (const auto& s : segs) add(s);
  }

  const SpectrogramDataset& dataset() const { return ds_; }
  SpectrogramDataset take() { return std::move(ds_); }
  const StftConfig& config() const { return cfg_; }

 private:
  StftConfig cfg_;
  int out_h_, out_w_;
  SpectrogramDataset ds_;
};

inline SpectrogramDataset build_spectrogram_dataset(const std::vector<eeg::SegmentVector>& segments,
                                                    const StftConfig& cfg = {}, int out_h = 128, int out_w = 128) {
  SpectrogramBuilder b(cfg, out_h, out_w);
  b.add(segments);
  return b.take();
}

}  // namespace sdx::spectral
