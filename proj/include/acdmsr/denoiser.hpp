#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "acdmsr/schedule.hpp"
#include "acdmsr/tensor.hpp"

namespace acdmsr {

// f(x_t, t, cond) -> x0_hat, same shape as x_t. t is continuous.
template <typename T>
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual BasicTensor<T> denoise(const BasicTensor<T>& x_t, double t, const BasicTensor<T>* cond) const = 0;
};

// Posterior mean E[x0 | x_t] for Gaussian data x0 ~ N(mu, s2 I) under the
// forward marginal. When a condition tensor is supplied it is used as the
// per-component mean (the conditional law x0 | c ~ N(c, s2 I)); otherwise the
// scalar mean applies.
template <typename T>
class AnalyticGaussianDenoiser final : public Denoiser<T> {
 public:
  AnalyticGaussianDenoiser(const NoiseSchedule& schedule, double mu, double s2) : schedule_(&schedule), mu_(mu), s2_(s2) {
    require(s2 > 0.0, ErrorKind::range, "data variance s2 must be positive");
  }

  double mu() const { return mu_; }
  double s2() const { return s2_; }

  BasicTensor<T> denoise(const BasicTensor<T>& x_t, double t, const BasicTensor<T>* cond) const override {
    if (cond) require_same_shape(x_t.shape(), cond->shape(), "analytic denoiser x_t/cond");
    const double ab = schedule_->alpha_bar_at(t);
    const double a = std::sqrt(ab), var = 1.0 - ab;
    const double denom = ab * s2_ + var;
    BasicTensor<T> out(x_t.shape());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      const double mu = cond ? double((*cond)[i]) : mu_;
      out[i] = T((a * s2_ * double(x_t[i]) + var * mu) / denom);
    }
    return out;
  }

 private:
  const NoiseSchedule* schedule_;
  double mu_, s2_;
};

template <typename T>
BasicTensor<T> analytic_denoise(const AnalyticGaussianDenoiser<T>& d, const NoiseSchedule& s, const BasicTensor<T>& x_t,
                                std::size_t t) {
  if (t < 1 || t > s.T()) fail(ErrorKind::range, "analytic_denoise timestep outside [1, T]");
  return d.denoise(x_t, double(t), nullptr);
}

// Sinusoidal embedding [sin(t w_k)..., cos(t w_k)...] with frequencies w_k
// running geometrically from 1 down to 1/10000.
inline std::vector<double> time_embedding(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) fail(ErrorKind::range, "time embedding dimension must be even and positive");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < half; ++k) {
    const double w = half == 1 ? 1.0 : std::pow(10000.0, -double(k) / double(half - 1));
    out[k] = std::sin(t * w);
    out[half + k] = std::cos(t * w);
  }
  return out;
}

}  // namespace acdmsr
