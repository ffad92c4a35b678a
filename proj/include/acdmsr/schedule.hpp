#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "acdmsr/error.hpp"

namespace acdmsr {

struct PosteriorCoeffs {
  double coef_x0 = 0;
  double coef_xt = 0;
  double variance = 0;
};

// Discrete noise schedule with all derived per-timestep quantities.
// Arrays are indexed by timestep; index 0 holds the alpha_bar[0] = 1 convention
// (beta[0], alpha[0] and lambda[0] are unused).
class NoiseSchedule {
 public:
  // beta holds beta[1..T].
  explicit NoiseSchedule(const std::vector<double>& beta) : T_(beta.size()) {
    require(T_ >= 1, ErrorKind::range, "schedule needs T >= 1");
    beta_.assign(T_ + 1, 0.0);
    alpha_.assign(T_ + 1, 1.0);
    alpha_bar_.assign(T_ + 1, 1.0);
    lambda_.assign(T_ + 1, 0.0);
    for (std::size_t t = 1; t <= T_; ++t) {
      const double b = beta[t - 1];
      if (!(b > 0.0 && b < 1.0)) fail(ErrorKind::range, "beta[" + std::to_string(t) + "] must lie in (0,1)");
      if (t > 1 && b < beta_[t - 1]) fail(ErrorKind::range, "beta must be non-decreasing");
      beta_[t] = b;
      alpha_[t] = 1.0 - b;
      alpha_bar_[t] = alpha_bar_[t - 1] * alpha_[t];
      if (!(alpha_bar_[t] > 0.0)) fail(ErrorKind::range, "alpha_bar underflows at t=" + std::to_string(t));
      lambda_[t] = 0.5 * std::log(alpha_bar_[t] / (1.0 - alpha_bar_[t]));
    }
    for (std::size_t t = 2; t <= T_; ++t)
      if (!(lambda_[t] < lambda_[t - 1])) fail(ErrorKind::range, "lambda not strictly decreasing at t=" + std::to_string(t));
  }

  std::size_t T() const noexcept { return T_; }
  double beta(std::size_t t) const { return beta_.at(checked(t)); }
  double alpha(std::size_t t) const { return alpha_.at(checked(t)); }
  double alpha_bar(std::size_t t) const { return alpha_bar_.at(t); }
  double sigma(std::size_t t) const { return std::sqrt(1.0 - alpha_bar_.at(t)); }
  double lambda(std::size_t t) const { return lambda_.at(checked(t)); }

  const std::vector<double>& betas() const noexcept { return beta_; }
  const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }

  // Half-log-SNR at continuous time t in (0, T]. Piecewise linear between
  // integer grid points; on (0, 1) the noise variance 1 - alpha_bar is
  // interpolated linearly from 0 so lambda diverges only at t = 0.
  double lambda_of(double t) const {
    if (!(t > 0.0) || t > double(T_))
      fail(ErrorKind::range, "lambda_of needs t in (0, " + std::to_string(T_) + "], got " + std::to_string(t));
    if (t < 1.0) {
      const double var = t * (1.0 - alpha_bar_[1]);
      return 0.5 * std::log((1.0 - var) / var);
    }
    const auto lo = static_cast<std::size_t>(std::floor(t));
    if (lo >= T_) return lambda_[T_];
    const double f = t - double(lo);
    return lambda_[lo] + f * (lambda_[lo + 1] - lambda_[lo]);
  }

  // Inverse of lambda_of on [lambda(T), lambda(1)].
  double t_of_lambda(double lam) const {
    if (!(lam >= lambda_[T_] && lam <= lambda_[1]))
      fail(ErrorKind::range, "t_of_lambda: " + std::to_string(lam) + " outside [" + std::to_string(lambda_[T_]) + ", " +
                                 std::to_string(lambda_[1]) + "]");
    if (T_ == 1) return 1.0;
    // first grid index k in [1,T] with lambda[k] <= lam (lambda decreasing)
    std::size_t lo = 1, hi = T_;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (lambda_[mid] <= lam)
        hi = mid;
      else
        lo = mid + 1;
    }
    if (lo == 1 || lambda_[lo] == lam) return double(lo);
    const std::size_t k = lo - 1;  // lambda[k] > lam > lambda[k+1]
    return double(k) + (lam - lambda_[k]) / (lambda_[k + 1] - lambda_[k]);
  }

  // alpha_bar at continuous time; exact table value at integers, otherwise
  // sigmoid(2 * lambda_of(t)), i.e. geometric interpolation in lambda-space.
  double alpha_bar_at(double t) const {
    if (t == 0.0) return 1.0;
    if (t == std::floor(t) && t >= 1.0 && t <= double(T_)) return alpha_bar_[std::size_t(t)];
    const double l = lambda_of(t);
    return 1.0 / (1.0 + std::exp(-2.0 * l));
  }

  // Coefficients of q(x_{t-1} | x_t, x_0).
  PosteriorCoeffs posterior_coeffs(std::size_t t) const {
    checked(t);
    const double ab = alpha_bar_[t], ab_prev = alpha_bar_[t - 1];
    PosteriorCoeffs c;
    c.coef_x0 = std::sqrt(ab_prev) * beta_[t] / (1.0 - ab);
    c.coef_xt = std::sqrt(alpha_[t]) * (1.0 - ab_prev) / (1.0 - ab);
    c.variance = (1.0 - ab_prev) / (1.0 - ab) * beta_[t];
    return c;
  }

  // Coefficients of q(x_s | x_t, x_0) for arbitrary 0 <= s < t; equals
  // posterior_coeffs(t) when s = t - 1.
  PosteriorCoeffs posterior_between(double t_from, double t_to) const {
    if (!(t_from > t_to) || t_to < 0.0) fail(ErrorKind::range, "posterior_between needs t_from > t_to >= 0");
    const double ab = alpha_bar_at(t_from), ab_to = alpha_bar_at(t_to);
    const double ratio = ab / ab_to;  // alpha_bar_t / alpha_bar_s
    PosteriorCoeffs c;
    c.coef_x0 = std::sqrt(ab_to) * (1.0 - ratio) / (1.0 - ab);
    c.coef_xt = std::sqrt(ratio) * (1.0 - ab_to) / (1.0 - ab);
    c.variance = (1.0 - ab_to) / (1.0 - ab) * (1.0 - ratio);
    return c;
  }

 private:
  std::size_t checked(std::size_t t) const {
    if (t < 1 || t > T_) fail(ErrorKind::range, "timestep " + std::to_string(t) + " outside [1, " + std::to_string(T_) + "]");
    return t;
  }

  std::size_t T_;
  std::vector<double> beta_, alpha_, alpha_bar_, lambda_;
};

struct ScheduleParams {
  std::size_t T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

inline NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T < 1) fail(ErrorKind::range, "T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    fail(ErrorKind::range, "need 0 < beta_start <= beta_end < 1");
  std::vector<double> beta(T);
  for (std::size_t i = 0; i < T; ++i)
    beta[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * double(i) / double(T - 1);
  return NoiseSchedule(beta);
}

inline NoiseSchedule make_linear_schedule(const ScheduleParams& p = {}) {
  return make_linear_schedule(p.T, p.beta_start, p.beta_end);
}

// tau_i = round(i*T/N) for i = N..1, descending, deduplicated.
inline std::vector<std::size_t> subsample_timesteps(std::size_t T, std::size_t N) {
  if (N < 1 || N > T) fail(ErrorKind::range, "subsample_timesteps needs 1 <= N <= T (N=" + std::to_string(N) + ", T=" + std::to_string(T) + ")");
  std::vector<std::size_t> out;
  out.reserve(N);
  for (std::size_t i = N; i >= 1; --i) {
    const auto tau = static_cast<std::size_t>(std::llround(double(i) * double(T) / double(N)));
    if (out.empty() || out.back() != tau) out.push_back(tau);
  }
  return out;
}

// N continuous times from T down to 1, equally spaced in lambda.
inline std::vector<double> subsample_lambda(const NoiseSchedule& s, std::size_t N) {
  if (N < 1) fail(ErrorKind::range, "subsample_lambda needs N >= 1");
  std::vector<double> out{double(s.T())};
  if (N == 1) return out;
  const double l0 = s.lambda(s.T()), l1 = s.lambda(1);
  for (std::size_t i = 1; i + 1 < N; ++i) out.push_back(s.t_of_lambda(l0 + (l1 - l0) * double(i) / double(N - 1)));
  out.push_back(1.0);
  return out;
}

}  // namespace acdmsr
