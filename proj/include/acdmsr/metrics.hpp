#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "acdmsr/tensor.hpp"

namespace acdmsr {

struct MetricReport {
  double psnr_db = 0;  // +inf for identical images
  double ssim = 0;
  double mse = 0;
};

template <typename T>
double mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "metric inputs");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return acc / double(a.size());
}

inline double psnr_from_mse(double m) {
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

// Peak 1: inputs are expected in [0, 1].
template <typename T>
double psnr(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return psnr_from_mse(mse(a, b));
}

inline constexpr std::size_t kSsimWindow = 11;

inline std::vector<double> gaussian_window_1d(std::size_t size = kSsimWindow, double sigma = 1.5) {
  std::vector<double> w(size);
  const double c = double(size / 2);
  double sum = 0;
  for (std::size_t i = 0; i < size; ++i) sum += w[i] = std::exp(-(double(i) - c) * (double(i) - c) / (2 * sigma * sigma));
  for (auto& v : w) v /= sum;
  return w;
}

// Mean local SSIM over valid window positions, averaged over channels.
// Rank-2 inputs are treated as one channel.
template <typename T>
double ssim(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "ssim inputs");
  if (a.rank() != 2 && a.rank() != 3) fail(ErrorKind::shape, "ssim expects H x W or C x H x W, got " + shape_str(a.shape()));
  const std::size_t c = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
  constexpr std::size_t K = kSsimWindow;
  if (h < K || w < K) fail(ErrorKind::shape, "ssim needs images at least 11x11, got " + shape_str(a.shape()));
  const auto win = gaussian_window_1d();
  const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  const std::size_t oh = h - K + 1, ow = w - K + 1;

  // Separable filtering of x, y, x^2, y^2, xy: horizontal pass, then vertical.
  auto filter = [&](const std::vector<double>& src) {
    std::vector<double> tmp(h * ow), out(oh * ow);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0;
        for (std::size_t k = 0; k < K; ++k) s += win[k] * src[y * w + x + k];
        tmp[y * ow + x] = s;
      }
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0;
        for (std::size_t k = 0; k < K; ++k) s += win[k] * tmp[(y + k) * ow + x];
        out[y * ow + x] = s;
      }
    return out;
  };

  double total = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<double> x(h * w), y(h * w), xx(h * w), yy(h * w), xy(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      x[i] = double(a[ch * h * w + i]);
      y[i] = double(b[ch * h * w + i]);
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter(x), my = filter(y), sxx = filter(xx), syy = filter(yy), sxy = filter(xy);
    double acc = 0;
    for (std::size_t i = 0; i < oh * ow; ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + C1) * (2 * cxy + C2)) / ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
    }
    total += acc / double(oh * ow);
  }
  return total / double(c);
}

template <typename T>
MetricReport evaluate(const BasicTensor<T>& output, const BasicTensor<T>& reference) {
  MetricReport r;
  r.mse = mse(output, reference);
  r.psnr_db = psnr_from_mse(r.mse);
  r.ssim = ssim(output, reference);
  return r;
}

}  // namespace acdmsr
