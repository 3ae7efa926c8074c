#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pepsi {

/// Violated precondition of a library operation (bad dims, bad arguments).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Spatial extent too small for the requested padding or window.
class SizingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Four-axis extent (batch, channel, height, width). Kernel tensors reuse the
/// same tuple as (kh, kw, in, out).
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t index(int in, int ic, int ih, int iw) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
  }
  std::array<int, 4> dims() const { return {n, c, h, w}; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense row-major (NCHW) array of T.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(checked(shape)), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(checked(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ContractError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int h, int w) { return data_[shape_.index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[shape_.index(n, c, h, w)]; }

  /// Pointer to the (h, w) plane of sample n, channel c.
  T* plane(int n, int c) { return data_.data() + shape_.index(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + shape_.index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, different extents of equal element count.
  Tensor reshaped(Shape s) const { return Tensor(s, data_); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static Shape checked(Shape s) {
    if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) {
      throw ContractError("negative tensor extent " + to_string(s));
    }
    return s;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Throws ContractError if any element is NaN or infinite.
template <typename T>
void check_finite(const Tensor<T>& t, const std::string& what);

template <typename T>
T max_abs(const Tensor<T>& t);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

}  // namespace pepsi
