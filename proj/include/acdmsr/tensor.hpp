#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "acdmsr/error.hpp"

namespace acdmsr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major array. Images are rank 3 (channels x height x width).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_dims();
    data_.assign(shape_size(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (shape_size(shape_) != data_.size())
      fail(ErrorKind::shape, "shape " + shape_str(shape_) + " needs " + std::to_string(shape_size(shape_)) +
                                 " values, got " + std::to_string(data_.size()));
  }

  // Construction from untrusted input: rejects NaN/Inf.
  static BasicTensor from_external(Shape shape, std::vector<T> data) {
    BasicTensor t(std::move(shape), std::move(data));
    for (std::size_t i = 0; i < t.data_.size(); ++i)
      if (!std::isfinite(t.data_[i])) fail(ErrorKind::non_finite, "element " + std::to_string(i) + " is not finite");
    return t;
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // rank-3 accessors
  T& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  BasicTensor reshaped(Shape s) const { return BasicTensor(std::move(s), data_); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t i = 0; i < shape_.size(); ++i)
      if (shape_[i] == 0) fail(ErrorKind::shape, "dimension " + std::to_string(i) + " of " + shape_str(shape_) + " is zero");
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) fail(ErrorKind::shape, std::string(what) + ": " + shape_str(a) + " vs " + shape_str(b));
}

// Elementwise helpers on values (no graph recording).
template <typename T, typename F>
BasicTensor<T> map(const BasicTensor<T>& a, F&& f) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename T, typename F>
BasicTensor<T> zip(const BasicTensor<T>& a, const BasicTensor<T>& b, F&& f, const char* what = "zip") {
  require_same_shape(a.shape(), b.shape(), what);
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <typename T>
BasicTensor<T> axpby(T a, const BasicTensor<T>& x, T b, const BasicTensor<T>& y) {
  return zip(x, y, [a, b](T u, T v) { return a * u + b * v; }, "axpby");
}

template <typename T>
BasicTensor<T> clamp(const BasicTensor<T>& a, T lo, T hi) {
  return map(a, [lo, hi](T v) { return std::clamp(v, lo, hi); });
}

// Image domain conversions: pixel v in [0,1] <-> diffusion value 2v-1.
template <typename T>
BasicTensor<T> to_diffusion(const BasicTensor<T>& img) {
  return map(img, [](T v) { return T(2) * v - T(1); });
}

template <typename T>
BasicTensor<T> to_unit(const BasicTensor<T>& x) {
  return map(x, [](T v) { return std::clamp((v + T(1)) / T(2), T(0), T(1)); });
}

}  // namespace acdmsr
