#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sdx/core/error.hpp"

namespace sdx {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

inline std::int64_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1}, std::multiplies<>());
}

inline void check_shape(const Shape& s) {
  if (s.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : s)
    if (d < 1) throw DimensionError("tensor dimension < 1 in shape " + shape_str(s));
}

// Dense row-major array. Layout for images is NHWC.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
      throw DimensionError("data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape s) const {
    check_shape(s);
    if (shape_numel(s) != static_cast<std::int64_t>(data_.size()))
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  void require_same_shape(const Tensor& o, const char* op) const {
    if (shape_ != o.shape_)
      throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(shape_) + " vs " +
                           shape_str(o.shape_));
  }

  // Contiguous slice [begin, end) along the leading dimension.
  Tensor slice_rows(std::int64_t begin, std::int64_t end) const {
    const std::int64_t inner = shape_numel(shape_) / shape_[0];
    Shape s = shape_;
    s[0] = end - begin;
    return Tensor(std::move(s), std::vector<T>(data_.begin() + begin * inner, data_.begin() + end * inner));
  }

  // Rows selected by index along the leading dimension.
  Tensor gather_rows(std::span<const std::size_t> rows) const {
    const std::size_t inner = data_.size() / static_cast<std::size_t>(shape_[0]);
    Shape s = shape_;
    s[0] = static_cast<std::int64_t>(rows.size());
    std::vector<T> out(rows.size() * inner);
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(data_.begin() + rows[r] * inner, inner, out.begin() + r * inner);
    return Tensor(std::move(s), std::move(out));
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

}  // namespace sdx
