#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gptrans/errors.hpp"

namespace gptrans {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

/// Row-major strides; extents of 1 get stride 0 so they broadcast for free.
inline std::vector<std::size_t> broadcast_strides(const Shape& s, std::size_t rank) {
  std::vector<std::size_t> st(rank, 0);
  std::size_t acc = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::size_t ax = s.size() - 1 - i;
    std::size_t out_ax = rank - 1 - i;
    st[out_ax] = s[ax] == 1 ? 0 : acc;
    acc *= s[ax];
  }
  return st;
}

/// Numpy-style broadcast of two shapes (trailing alignment).
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t ea = i < a.size() ? a[a.size() - 1 - i] : 1;
    std::size_t eb = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    out[rank - 1 - i] = std::max(ea, eb);
  }
  return out;
}

/// Dense row-major tensor. Used for both real values and integer id tensors.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)), data_(numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel(shape_))
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index rank mismatch for " + shape_str(shape_));
    std::size_t off = 0;
    std::size_t ax = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[ax]) throw ShapeError("index out of range for " + shape_str(shape_));
      off = off * shape_[ax] + i;
      ++ax;
    }
    return off;
  }
  T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  const T& at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  void reshape(Shape s) {
    if (numel(s) != data_.size()) throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s));
    shape_ = std::move(s);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using IdTensor = Tensor<std::int32_t>;
using MaskTensor = Tensor<std::uint8_t>;

}  // namespace gptrans
