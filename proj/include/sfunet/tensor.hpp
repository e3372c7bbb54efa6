#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#ifndef SFUNET_REAL
#define SFUNET_REAL double
#endif

namespace sfunet {

/// Scalar type of the build. Test builds use double; the float variant is
/// compiled from the same sources with SFUNET_REAL=float.
using Real = SFUNET_REAL;
using Complex = std::complex<Real>;

/// Dimensions of a rank-4 [N,C,H,W] tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense row-major [N,C,H,W] array. The shape is fixed at construction;
/// reshaping produces a new tensor.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(shape), data_(shape.numel(), fill) {}
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[index(n, c, h, w)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h,
                      std::size_t w) const {
    return data_[index(n, c, h, w)];
  }

  /// Contiguous view of one (n, c) spatial plane.
  std::span<T> plane(std::size_t n, std::size_t c) {
    return std::span<T>(data_).subspan(index(n, c, 0, 0), shape_.plane());
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const {
    return std::span<const T>(data_).subspan(index(n, c, 0, 0),
                                             shape_.plane());
  }

  void fill(T v);

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<Real>;
using ComplexTensor = BasicTensor<Complex>;

/// Throws std::invalid_argument carrying `what` and both shapes.
[[noreturn]] void shape_error(const std::string& what, const Shape& a,
                              const Shape& b);

}  // namespace sfunet

namespace sfunet {

/// Integer class-index maps [N,H,W].
struct Labels {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<int> values;

  Labels() = default;
  Labels(std::size_t n_, std::size_t h_, std::size_t w_, int fill = 0)
      : n(n_), h(h_), w(w_), values(n_ * h_ * w_, fill) {}

  std::size_t plane() const { return h * w; }
  int& operator()(std::size_t i, std::size_t y, std::size_t x) {
    return values[(i * h + y) * w + x];
  }
  int operator()(std::size_t i, std::size_t y, std::size_t x) const {
    return values[(i * h + y) * w + x];
  }
  friend bool operator==(const Labels&, const Labels&) = default;
};

}  // namespace sfunet
