#pragma once

#include <cmath>
#include <cstdint>

#include "acdmsr/rng.hpp"
#include "acdmsr/schedule.hpp"
#include "acdmsr/tensor.hpp"

namespace acdmsr {

template <typename T>
struct NoisedSample {
  BasicTensor<T> x_t;
  std::size_t t;
  BasicTensor<T> eps;
};

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
template <typename T>
NoisedSample<T> q_sample(const NoiseSchedule& s, const BasicTensor<T>& x0, std::size_t t, const BasicTensor<T>& eps) {
  require_same_shape(x0.shape(), eps.shape(), "q_sample x0/eps");
  if (t < 1 || t > s.T()) fail(ErrorKind::range, "q_sample timestep " + std::to_string(t) + " outside [1, T]");
  const double ab = s.alpha_bar(t);
  const T a = T(std::sqrt(ab)), b = T(std::sqrt(1.0 - ab));
  return NoisedSample<T>{axpby(a, x0, b, eps), t, eps};
}

// Continuous-time variant used by samplers; t = 0 gives x0.
template <typename T>
BasicTensor<T> q_sample_at(const NoiseSchedule& s, const BasicTensor<T>& x0, double t, const BasicTensor<T>& eps) {
  require_same_shape(x0.shape(), eps.shape(), "q_sample x0/eps");
  const double ab = s.alpha_bar_at(t);
  return axpby(T(std::sqrt(ab)), x0, T(std::sqrt(1.0 - ab)), eps);
}

// Inverts the forward identity: eps = (x_t - sqrt(alpha_bar_t) x0_hat) / sqrt(1 - alpha_bar_t).
template <typename T>
BasicTensor<T> eps_from_x0_at(const NoiseSchedule& s, const BasicTensor<T>& x_t, const BasicTensor<T>& x0_hat, double t) {
  require_same_shape(x_t.shape(), x0_hat.shape(), "eps_from_x0 x_t/x0_hat");
  const double ab = s.alpha_bar_at(t);
  if (!(ab < 1.0)) fail(ErrorKind::range, "eps_from_x0 undefined where alpha_bar = 1 (t=" + std::to_string(t) + ")");
  const double inv = 1.0 / std::sqrt(1.0 - ab), a = std::sqrt(ab);
  return zip(x_t, x0_hat, [a, inv](T xt, T x0) { return T((double(xt) - a * double(x0)) * inv); }, "eps_from_x0");
}

template <typename T>
BasicTensor<T> eps_from_x0(const NoiseSchedule& s, const BasicTensor<T>& x_t, const BasicTensor<T>& x0_hat, std::size_t t) {
  if (t < 1 || t > s.T()) fail(ErrorKind::range, "eps_from_x0 timestep " + std::to_string(t) + " outside [1, T]");
  return eps_from_x0_at(s, x_t, x0_hat, double(t));
}

// x0_hat = (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t); used by the noise-prediction objective.
template <typename T>
BasicTensor<T> x0_from_eps_at(const NoiseSchedule& s, const BasicTensor<T>& x_t, const BasicTensor<T>& eps_hat, double t) {
  require_same_shape(x_t.shape(), eps_hat.shape(), "x0_from_eps x_t/eps_hat");
  const double ab = s.alpha_bar_at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  return zip(x_t, eps_hat, [a, b](T xt, T e) { return T((double(xt) - b * double(e)) / a); }, "x0_from_eps");
}

// Standard-normal noise keyed by (seed, sample index, timestep).
template <typename T>
BasicTensor<T> forward_noise(std::uint64_t seed, std::uint64_t sample_index, std::uint64_t timestep, const Shape& shape) {
  return CounterRng(seed).stream({sample_index, timestep}).normal_tensor<T>(shape);
}

}  // namespace acdmsr
