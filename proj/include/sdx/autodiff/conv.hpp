#pragma once

#include <algorithm>
#include <array>

#include "sdx/autodiff/ops.hpp"

namespace sdx {

enum class Padding { same, valid };

struct Stride {
  std::int64_t h = 1;
  std::int64_t w = 1;
};

// Geometry of one convolution y = conv(x, k). x: [N, IH, IW, CI],
// k: [KH, KW, CI, CO], y: [N, OH, OW, CO]. "same" padding follows the
// ceil(in / stride) convention with the extra pad row/column at the end.
struct ConvGeometry {
  std::int64_t n, ih, iw, ci, oh, ow, co, kh, kw, sh, sw, pt, pl;

  Shape x_shape() const { return {n, ih, iw, ci}; }
  Shape y_shape() const { return {n, oh, ow, co}; }
  Shape k_shape() const { return {kh, kw, ci, co}; }
  std::int64_t patch() const { return kh * kw * ci; }
};

namespace detail {

inline void same_pad(std::int64_t in, std::int64_t k, std::int64_t s, std::int64_t& out, std::int64_t& before) {
  out = (in + s - 1) / s;
  const auto total = std::max<std::int64_t>((out - 1) * s + k - in, 0);
  before = total / 2;
}

inline ConvGeometry make_geometry(const Shape& x, const Shape& k, Stride stride, Padding pad) {
  if (x.size() != 4) throw DimensionError("conv2d: input must be NHWC, got " + shape_str(x));
  if (k.size() != 4) throw DimensionError("conv2d: kernel must be KhKwCinCout, got " + shape_str(k));
  if (stride.h < 1 || stride.w < 1) throw DimensionError("conv2d: stride components must be >= 1");
  if (x[3] != k[2])
    throw DimensionError("conv2d: input channels of " + shape_str(x) + " do not match kernel " +
                         shape_str(k));
  ConvGeometry g{};
  g.n = x[0];
  g.ih = x[1];
  g.iw = x[2];
  g.ci = x[3];
  g.kh = k[0];
  g.kw = k[1];
  g.co = k[3];
  g.sh = stride.h;
  g.sw = stride.w;
  if (pad == Padding::same) {
    same_pad(g.ih, g.kh, g.sh, g.oh, g.pt);
    same_pad(g.iw, g.kw, g.sw, g.ow, g.pl);
  } else {
    if (g.ih < g.kh || g.iw < g.kw)
      throw DimensionError("conv2d valid: kernel " + shape_str(k) + " larger than input " + shape_str(x));
    g.oh = (g.ih - g.kh) / g.sh + 1;
    g.ow = (g.iw - g.kw) / g.sw + 1;
    g.pt = g.pl = 0;
  }
  return g;
}

// Samples per GEMM chunk so that the column buffer stays bounded.
inline std::int64_t chunk_samples(const ConvGeometry& g) {
  const std::int64_t per = std::max<std::int64_t>(1, g.oh * g.ow * g.patch());
  return std::clamp<std::int64_t>((std::int64_t{1} << 23) / per, 1, g.n);
}

template <class T>
void im2col(const T* x, const ConvGeometry& g, std::int64_t n0, std::int64_t nb, T* cols) {
  const auto patch = g.patch();
  for (std::int64_t b = 0; b < nb; ++b) {
    const T* xs = x + (n0 + b) * g.ih * g.iw * g.ci;
    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
      for (std::int64_t ox = 0; ox < g.ow; ++ox) {
        T* row = cols + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
          const auto iy = oy * g.sh + ky - g.pt;
          for (std::int64_t kx = 0; kx < g.kw; ++kx) {
            const auto ix = ox * g.sw + kx - g.pl;
            T* dst = row + (ky * g.kw + kx) * g.ci;
            if (iy < 0 || iy >= g.ih || ix < 0 || ix >= g.iw) {
              std::fill_n(dst, g.ci, T(0));
            } else {
              std::copy_n(xs + (iy * g.iw + ix) * g.ci, g.ci, dst);
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const T* cols, const ConvGeometry& g, std::int64_t n0, std::int64_t nb, T* x) {
  const auto patch = g.patch();
  for (std::int64_t b = 0; b < nb; ++b) {
    T* xs = x + (n0 + b) * g.ih * g.iw * g.ci;
    for (std::int64_t oy = 0; oy < g.oh; ++oy) {
      for (std::int64_t ox = 0; ox < g.ow; ++ox) {
        const T* row = cols + ((b * g.oh + oy) * g.ow + ox) * patch;
        for (std::int64_t ky = 0; ky < g.kh; ++ky) {
          const auto iy = oy * g.sh + ky - g.pt;
          if (iy < 0 || iy >= g.ih) continue;
          for (std::int64_t kx = 0; kx < g.kw; ++kx) {
            const auto ix = ox * g.sw + kx - g.pl;
            if (ix < 0 || ix >= g.iw) continue;
            const T* src = row + (ky * g.kw + kx) * g.ci;
            T* dst = xs + (iy * g.iw + ix) * g.ci;
            for (std::int64_t c = 0; c < g.ci; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

template <class T>
Tensor<T> conv_forward_raw(const Tensor<T>& x, const Tensor<T>& k, const ConvGeometry& g) {
  Tensor<T> y(g.y_shape());
  const auto chunk = chunk_samples(g);
  std::vector<T> cols;
  ConstMatMap<T> K(k.data(), g.patch(), g.co);
  for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
    const auto nb = std::min(chunk, g.n - n0);
    const auto rows = nb * g.oh * g.ow;
    cols.resize(static_cast<std::size_t>(rows * g.patch()));
    im2col(x.data(), g, n0, nb, cols.data());
    ConstMatMap<T> C(cols.data(), rows, g.patch());
    MatMap<T> Y(y.data() + n0 * g.oh * g.ow * g.co, rows, g.co);
    Y.noalias() = C * K;
  }
  return y;
}

// Adjoint of conv_forward_raw in x: maps a y-shaped tensor to x shape.
template <class T>
Tensor<T> conv_adjoint_raw(const Tensor<T>& y, const Tensor<T>& k, const ConvGeometry& g) {
  Tensor<T> x(g.x_shape());
  const auto chunk = chunk_samples(g);
  std::vector<T> cols;
  ConstMatMap<T> K(k.data(), g.patch(), g.co);
  for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
    const auto nb = std::min(chunk, g.n - n0);
    const auto rows = nb * g.oh * g.ow;
    cols.resize(static_cast<std::size_t>(rows * g.patch()));
    ConstMatMap<T> Y(y.data() + n0 * g.oh * g.ow * g.co, rows, g.co);
    MatMap<T> C(cols.data(), rows, g.patch());
    C.noalias() = Y * K.transpose();
    col2im_add(cols.data(), g, n0, nb, x.data());
  }
  return x;
}

// d<y, conv(x, k)>/dk: maps (x, y) to kernel shape.
template <class T>
Tensor<T> conv_kernel_raw(const Tensor<T>& x, const Tensor<T>& y, const ConvGeometry& g) {
  Tensor<T> k(g.k_shape());
  const auto chunk = chunk_samples(g);
  std::vector<T> cols;
  MatMap<T> K(k.data(), g.patch(), g.co);
  for (std::int64_t n0 = 0; n0 < g.n; n0 += chunk) {
    const auto nb = std::min(chunk, g.n - n0);
    const auto rows = nb * g.oh * g.ow;
    cols.resize(static_cast<std::size_t>(rows * g.patch()));
    im2col(x.data(), g, n0, nb, cols.data());
    ConstMatMap<T> C(cols.data(), rows, g.patch());
    ConstMatMap<T> Y(y.data() + n0 * g.oh * g.ow * g.co, rows, g.co);
    K.noalias() += C.transpose() * Y;
  }
  return k;
}

inline void expect_shape(const Shape& actual, const Shape& expected, const char* what) {
  if (actual != expected)
    throw DimensionError(std::string(what) + ": expected " + shape_str(expected) + ", got " +
                         shape_str(actual));
}

template <class T>
Var<T> conv_op(const Var<T>& x, const Var<T>& k, const ConvGeometry& g);
template <class T>
Var<T> conv_adjoint_op(const Var<T>& y, const Var<T>& k, const ConvGeometry& g);
template <class T>
Var<T> conv_kernel_op(const Var<T>& x, const Var<T>& y, const ConvGeometry& g);

// The three ops are the partial derivatives of the trilinear form
// <y, conv(x, k)>, so each one's backward is expressed with the other two.
template <class T>
Var<T> conv_op(const Var<T>& x, const Var<T>& k, const ConvGeometry& g) {
  expect_shape(x.shape(), g.x_shape(), "conv2d input");
  expect_shape(k.shape(), g.k_shape(), "conv2d kernel");
  return make_op<T>("conv2d", conv_forward_raw(x.value(), k.value(), g), {x, k},
                    [g](const Node<T>& n, const Var<T>& gy, const std::vector<bool>& need) {
                      return std::vector<Var<T>>{
                          need[0] ? conv_adjoint_op(gy, n.inputs[1], g) : Var<T>(),
                          need[1] ? conv_kernel_op(n.inputs[0], gy, g) : Var<T>()};
                    });
}

template <class T>
Var<T> conv_adjoint_op(const Var<T>& y, const Var<T>& k, const ConvGeometry& g) {
  expect_shape(y.shape(), g.y_shape(), "conv2d_transpose input");
  expect_shape(k.shape(), g.k_shape(), "conv2d_transpose kernel");
  return make_op<T>("conv2d_transpose", conv_adjoint_raw(y.value(), k.value(), g), {y, k},
                    [g](const Node<T>& n, const Var<T>& gx, const std::vector<bool>& need) {
                      return std::vector<Var<T>>{
                          need[0] ? conv_op(gx, n.inputs[1], g) : Var<T>(),
                          need[1] ? conv_kernel_op(gx, n.inputs[0], g) : Var<T>()};
                    });
}

template <class T>
Var<T> conv_kernel_op(const Var<T>& x, const Var<T>& y, const ConvGeometry& g) {
  expect_shape(x.shape(), g.x_shape(), "conv2d_kernel_grad input");
  expect_shape(y.shape(), g.y_shape(), "conv2d_kernel_grad output-gradient");
  return make_op<T>("conv2d_kernel_grad", conv_kernel_raw(x.value(), y.value(), g), {x, y},
                    [g](const Node<T>& n, const Var<T>& gk, const std::vector<bool>& need) {
                      return std::vector<Var<T>>{
                          need[0] ? conv_adjoint_op(n.inputs[1], gk, g) : Var<T>(),
                          need[1] ? conv_op(n.inputs[0], gk, g) : Var<T>()};
                    });
}

}  // namespace detail

// x: [N, H, W, Cin], kernel: [Kh, Kw, Cin, Cout].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, Stride stride = {}, Padding pad = Padding::same) {
  const auto g = detail::make_geometry(x.shape(), kernel.shape(), stride, pad);
  return detail::conv_op(x, kernel, g);
}

// Transposed convolution with "same" padding: output spatial dims are
// input * stride. kernel: [Kh, Kw, Cout, Cin] where Cin = input channels; the
// op is exactly the input-gradient of conv2d on the output-sized tensor.
template <class T>
Var<T> conv2d_transpose(const Var<T>& y, const Var<T>& kernel, Stride stride = {}) {
  if (y.value().rank() != 4) throw DimensionError("conv2d_transpose: input must be NHWC, got " + shape_str(y.shape()));
  if (kernel.value().rank() != 4 || kernel.shape()[3] != y.shape()[3])
    throw DimensionError("conv2d_transpose: kernel " + shape_str(kernel.shape()) +
                         " does not match input " + shape_str(y.shape()));
  const Shape xs{y.shape()[0], y.shape()[1] * stride.h, y.shape()[2] * stride.w, kernel.shape()[2]};
  const auto g = detail::make_geometry(xs, kernel.shape(), stride, Padding::same);
  return detail::conv_adjoint_op(y, kernel, g);
}

// 2x2 (or k x k) max pooling, stride = window, floor on odd sizes.
template <class T>
Var<T> max_pool(const Var<T>& x, std::int64_t window = 2) {
  if (x.value().rank() != 4) throw DimensionError("max_pool expects NHWC, got " + shape_str(x.shape()));
  const auto n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  const auto oh = h / window, ow = w / window;
  if (oh < 1 || ow < 1) throw DimensionError("max_pool window larger than input " + shape_str(x.shape()));
  Tensor<T> out(Shape{n, oh, ow, c});
  std::vector<std::int64_t> argmax(out.size());
  const auto& v = x.value();
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t oy = 0; oy < oh; ++oy)
      for (std::int64_t ox = 0; ox < ow; ++ox)
        for (std::int64_t ch = 0; ch < c; ++ch) {
          std::int64_t best = -1;
          T bv = -std::numeric_limits<T>::infinity();
          for (std::int64_t dy = 0; dy < window; ++dy)
            for (std::int64_t dx = 0; dx < window; ++dx) {
              const auto idx = ((b * h + oy * window + dy) * w + ox * window + dx) * c + ch;
              if (best < 0 || v[idx] > bv) {
                bv = v[idx];
                best = idx;
              }
            }
          const auto o = ((b * oh + oy) * ow + ox) * c + ch;
          out[o] = bv;
          argmax[o] = best;
        }
  return make_op<T>(
      "max_pool", std::move(out), {x},
      [argmax = std::move(argmax)](const Node<T>& node, const Var<T>& g, const std::vector<bool>&) {
        Tensor<T> gx(node.inputs[0].shape());
        for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g.value()[i];
        return std::vector<Var<T>>{Var<T>::constant(std::move(gx))};
      },
      false);
}

// Nearest-neighbour upsampling by integer factors.
template <class T>
Var<T> upsample_nearest(const Var<T>& x, Stride f) {
  const auto n = x.shape()[0], h = x.shape()[1], w = x.shape()[2], c = x.shape()[3];
  Tensor<T> out(Shape{n, h * f.h, w * f.w, c});
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t y = 0; y < h * f.h; ++y)
      for (std::int64_t xx = 0; xx < w * f.w; ++xx)
        std::copy_n(x.value().data() + ((b * h + y / f.h) * w + xx / f.w) * c, c,
                    out.data() + ((b * h * f.h + y) * w * f.w + xx) * c);
  return make_op<T>(
      "upsample_nearest", std::move(out), {x},
      [f, n, h, w, c](const Node<T>&, const Var<T>& g, const std::vector<bool>&) {
        Tensor<T> gx(Shape{n, h, w, c});
        for (std::int64_t b = 0; b < n; ++b)
          for (std::int64_t y = 0; y < h * f.h; ++y)
            for (std::int64_t xx = 0; xx < w * f.w; ++xx)
              for (std::int64_t ch = 0; ch < c; ++ch)
                gx[((b * h + y / f.h) * w + xx / f.w) * c + ch] +=
                    g.value()[((b * h * f.h + y) * w * f.w + xx) * c + ch];
        return std::vector<Var<T>>{Var<T>::constant(std::move(gx))};
      },
      false);
}

}  // namespace sdx
