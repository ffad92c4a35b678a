#pragma once

#ifndef EIGEN_DONT_PARALLELIZE
#define EIGEN_DONT_PARALLELIZE
#endif
#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include "acdmsr/tensor.hpp"

namespace acdmsr {

enum class Padding { reflect, zero };

struct ConvGeometry {
  std::size_t c_in, h, w;
  std::size_t c_out, k;
  std::size_t stride, pad;
  std::size_t h_out, w_out;

  std::size_t patch() const { return c_in * k * k; }
  std::size_t pixels() const { return h_out * w_out; }
};

// "Same" padding of k/2 on each side; kernel must be odd.
inline ConvGeometry conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride) {
  if (input.size() != 3) fail(ErrorKind::shape, "conv2d input must be C_in x H x W, got " + shape_str(input));
  if (kernel.size() != 4) fail(ErrorKind::shape, "conv2d kernel must be C_out x C_in x k x k, got " + shape_str(kernel));
  if (kernel[1] != input[0])
    fail(ErrorKind::shape, "conv2d kernel C_in=" + std::to_string(kernel[1]) + " but input has C_in=" +
                               std::to_string(input[0]));
  if (kernel[2] != kernel[3] || kernel[2] % 2 == 0)
    fail(ErrorKind::shape, "conv2d kernel must be square with odd k, got " + std::to_string(kernel[2]) + "x" +
                               std::to_string(kernel[3]));
  if (stride == 0) fail(ErrorKind::range, "conv2d stride must be positive");
  ConvGeometry g{};
  g.c_in = input[0];
  g.h = input[1];
  g.w = input[2];
  g.c_out = kernel[0];
  g.k = kernel[2];
  g.stride = stride;
  g.pad = g.k / 2;
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k)
    fail(ErrorKind::shape, "conv2d input " + shape_str(input) + " smaller than kernel");
  g.h_out = (g.h + 2 * g.pad - g.k) / stride + 1;
  g.w_out = (g.w + 2 * g.pad - g.k) / stride + 1;
  return g;
}

namespace detail {

// Maps a padded coordinate to a source index, or -1 for a zero tap.
inline long pad_index(long i, long n, Padding p) {
  if (i >= 0 && i < n) return i;
  if (p == Padding::zero) return -1;
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const RowMat<T>>;

}  // namespace detail

// cols is (C_in*k*k) x (H_out*W_out), row-major.
template <typename T>
void im2col(const T* in, const ConvGeometry& g, Padding p, T* cols) {
  const long h = long(g.h), w = long(g.w), k = long(g.k), pad = long(g.pad), s = long(g.stride);
  std::vector<long> xmap(g.w_out * g.k);
  for (long ox = 0; ox < long(g.w_out); ++ox)
    for (long kx = 0; kx < k; ++kx) xmap[ox * k + kx] = detail::pad_index(ox * s + kx - pad, w, p);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    const T* plane = in + c * g.h * g.w;
    for (long ky = 0; ky < k; ++ky)
      for (long kx = 0; kx < k; ++kx, ++row) {
        T* dst = cols + row * g.pixels();
        for (long oy = 0; oy < long(g.h_out); ++oy) {
          const long sy = detail::pad_index(oy * s + ky - pad, h, p);
          for (long ox = 0; ox < long(g.w_out); ++ox) {
            const long sx = xmap[ox * k + kx];
            *dst++ = (sy < 0 || sx < 0) ? T(0) : plane[sy * w + sx];
          }
        }
      }
  }
}

// Adjoint of im2col: scatter-adds cols back into grad_in.
template <typename T>
void col2im(const T* cols, const ConvGeometry& g, Padding p, T* grad_in) {
  const long h = long(g.h), w = long(g.w), k = long(g.k), pad = long(g.pad), s = long(g.stride);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c_in; ++c) {
    T* plane = grad_in + c * g.h * g.w;
    for (long ky = 0; ky < k; ++ky)
      for (long kx = 0; kx < k; ++kx, ++row) {
        const T* src = cols + row * g.pixels();
        for (long oy = 0; oy < long(g.h_out); ++oy) {
          const long sy = detail::pad_index(oy * s + ky - pad, h, p);
          for (long ox = 0; ox < long(g.w_out); ++ox, ++src) {
            const long sx = detail::pad_index(ox * s + kx - pad, w, p);
            if (sy >= 0 && sx >= 0) plane[sy * w + sx] += *src;
          }
        }
      }
  }
}

// Cross-correlation with "same" padding. If cols_out is non-null the
// im2col buffer is kept for the backward pass.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, std::size_t stride = 1,
                      Padding padding = Padding::reflect, std::vector<T>* cols_out = nullptr) {
  const ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), stride);
  std::vector<T> local;
  std::vector<T>& cols = cols_out ? *cols_out : local;
  cols.resize(g.patch() * g.pixels());
  im2col(input.data().data(), g, padding, cols.data());
  BasicTensor<T> out({g.c_out, g.h_out, g.w_out});
  detail::MapConstMat<T> wm(kernel.data().data(), Eigen::Index(g.c_out), Eigen::Index(g.patch()));
  detail::MapConstMat<T> cm(cols.data(), Eigen::Index(g.patch()), Eigen::Index(g.pixels()));
  detail::MapMat<T> om(out.data().data(), Eigen::Index(g.c_out), Eigen::Index(g.pixels()));
  om.noalias() = wm * cm;
  return out;
}

// Accumulates d/d(input) and d/d(kernel) given the stored im2col buffer.
template <typename T>
void conv2d_backward(const ConvGeometry& g, Padding padding, const std::vector<T>& cols, const BasicTensor<T>& kernel,
                     const BasicTensor<T>& grad_out, BasicTensor<T>* grad_in, BasicTensor<T>* grad_kernel) {
  detail::MapConstMat<T> go(grad_out.data().data(), Eigen::Index(g.c_out), Eigen::Index(g.pixels()));
  if (grad_kernel) {
    detail::MapConstMat<T> cm(cols.data(), Eigen::Index(g.patch()), Eigen::Index(g.pixels()));
    detail::MapMat<T> gk(grad_kernel->data().data(), Eigen::Index(g.c_out), Eigen::Index(g.patch()));
    gk.noalias() += go * cm.transpose();
  }
  if (grad_in) {
    detail::MapConstMat<T> wm(kernel.data().data(), Eigen::Index(g.c_out), Eigen::Index(g.patch()));
    std::vector<T> gcols(g.patch() * g.pixels());
    detail::MapMat<T> gc(gcols.data(), Eigen::Index(g.patch()), Eigen::Index(g.pixels()));
    gc.noalias() = wm.transpose() * go;
    col2im(gcols.data(), g, padding, grad_in->data().data());
  }
}

}  // namespace acdmsr
