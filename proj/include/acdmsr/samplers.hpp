#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "acdmsr/denoiser.hpp"
#include "acdmsr/forward.hpp"
#include "acdmsr/rng.hpp"
#include "acdmsr/schedule.hpp"

namespace acdmsr {

enum class SamplerKind { ancestral, first_order, second_order };
enum class Spacing { uniform_t, uniform_lambda };

inline const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::ancestral: return "ancestral";
    case SamplerKind::first_order: return "first_order";
    default: return "second_order";
  }
}

inline SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "ancestral") return SamplerKind::ancestral;
  if (s == "first_order" || s == "first-order") return SamplerKind::first_order;
  if (s == "second_order" || s == "second-order") return SamplerKind::second_order;
  fail(ErrorKind::config, "sampler must be ancestral|first_order|second_order, got '" + s + "'");
}

inline const char* to_string(Spacing s) { return s == Spacing::uniform_t ? "uniform_t" : "uniform_lambda"; }

inline Spacing parse_spacing(const std::string& s) {
  if (s == "uniform_t" || s == "t") return Spacing::uniform_t;
  if (s == "uniform_lambda" || s == "lambda") return Spacing::uniform_lambda;
  fail(ErrorKind::config, "spacing must be uniform_t|uniform_lambda, got '" + s + "'");
}

struct SamplerSpec {
  SamplerKind kind = SamplerKind::second_order;
  std::size_t steps = 40;
  Spacing spacing = Spacing::uniform_t;
  bool clip_x0 = true;
  std::uint64_t seed = 0;
  // Test canary: mirrors the midpoint lambda so the second-order step is wrong.
  bool inject_lambda_sign_fault = false;
};

// Descending times starting at T; the sampler appends the final step to 0.
inline std::vector<double> sampler_grid(const NoiseSchedule& s, const SamplerSpec& spec) {
  if (spec.spacing == Spacing::uniform_lambda) return subsample_lambda(s, spec.steps);
  std::vector<double> out;
  for (auto t : subsample_timesteps(s.T(), spec.steps)) out.push_back(double(t));
  return out;
}

template <typename T>
BasicTensor<T> predict_x0(const Denoiser<T>& model, const BasicTensor<T>& x, double t, const BasicTensor<T>* cond,
                          bool clip) {
  BasicTensor<T> x0 = model.denoise(x, t, cond);
  require_same_shape(x0.shape(), x.shape(), "denoiser output");
  if (!x0.all_finite()) fail(ErrorKind::non_finite, "denoiser produced non-finite values at t=" + std::to_string(t));
  return clip ? clamp(x0, T(-1), T(1)) : x0;
}

// Deterministic update that keeps the implied noise direction:
// x_to = sqrt(ab_to) x0 + sqrt(1 - ab_to) (x - sqrt(ab_from) x0) / sqrt(1 - ab_from)
template <typename T>
BasicTensor<T> ddim_update(const NoiseSchedule& s, const BasicTensor<T>& x, const BasicTensor<T>& x0_hat, double t_from,
                           double t_to) {
  if (!(t_from > t_to) || t_to < 0.0)
    fail(ErrorKind::range, "step needs t_from > t_to >= 0 (got " + std::to_string(t_from) + " -> " + std::to_string(t_to) + ")");
  const double ab_f = s.alpha_bar_at(t_from), ab_t = s.alpha_bar_at(t_to);
  const double r = std::sqrt(1.0 - ab_t) / std::sqrt(1.0 - ab_f);
  const double cx = r, c0 = std::sqrt(ab_t) - r * std::sqrt(ab_f);
  return zip(x, x0_hat, [cx, c0](T a, T b) { return T(cx * double(a) + c0 * double(b)); }, "ddim_update");
}

template <typename T>
BasicTensor<T> first_order_step(const NoiseSchedule& s, const Denoiser<T>& model, const BasicTensor<T>& x, double t_from,
                                double t_to, const BasicTensor<T>* cond, bool clip = true) {
  if (!(t_from > t_to) || t_to < 0.0)
    fail(ErrorKind::range, "first_order_step needs t_from > t_to >= 0 (got " + std::to_string(t_from) + " -> " +
                               std::to_string(t_to) + ")");
  return ddim_update(s, x, predict_x0(model, x, t_from, cond, clip), t_from, t_to);
}

// Midpoint time in lambda; with the fault flag the midpoint is mirrored
// through zero and clamped back into the schedule's range.
inline double lambda_midpoint_time(const NoiseSchedule& s, double t_from, double t_to, bool fault = false) {
  double lam = 0.5 * (s.lambda_of(t_from) + s.lambda_of(t_to));
  if (fault) lam = std::clamp(-lam, s.lambda(s.T()), s.lambda(1));
  lam = std::clamp(lam, s.lambda(s.T()), s.lambda(1));
  return s.t_of_lambda(lam);
}

// Half step in lambda, evaluate at the midpoint, then take the full step from
// x using that evaluation. Steps that end at 0 fall back to first order.
template <typename T>
BasicTensor<T> second_order_step(const NoiseSchedule& s, const Denoiser<T>& model, const BasicTensor<T>& x, double t_from,
                                 double t_to, const BasicTensor<T>* cond, bool clip = true, bool fault = false) {
  if (!(t_from > t_to) || t_to < 0.0)
    fail(ErrorKind::range, "second_order_step needs t_from > t_to >= 0");
  if (t_to == 0.0) return first_order_step(s, model, x, t_from, t_to, cond, clip);
  const double s_mid = lambda_midpoint_time(s, t_from, t_to, fault);
  if (!(s_mid < t_from) || !(s_mid > t_to)) {
    // degenerate midpoint (only reachable via the fault canary)
    const BasicTensor<T> x0 = predict_x0(model, x, s_mid, cond, clip);
    return ddim_update(s, x, x0, t_from, t_to);
  }
  const BasicTensor<T> u = first_order_step(s, model, x, t_from, s_mid, cond, clip);
  const BasicTensor<T> x0_mid = predict_x0(model, u, s_mid, cond, clip);
  return ddim_update(s, x, x0_mid, t_from, t_to);
}

// Posterior mean plus sqrt(variance) * eps for a single step t -> t-1.
template <typename T>
BasicTensor<T> ancestral_step(const NoiseSchedule& s, const Denoiser<T>& model, const BasicTensor<T>& x, std::size_t t,
                              const BasicTensor<T>* cond, const BasicTensor<T>& eps, bool clip = true) {
  require_same_shape(x.shape(), eps.shape(), "ancestral_step x/eps");
  const PosteriorCoeffs c = s.posterior_coeffs(t);
  const BasicTensor<T> x0 = predict_x0(model, x, double(t), cond, clip);
  const double sd = std::sqrt(c.variance);
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = T(c.coef_x0 * double(x0[i]) + c.coef_xt * double(x[i]) + sd * double(eps[i]));
  return out;
}

// Skip-step generalization using q(x_to | x_from, x0); no noise when t_to = 0.
template <typename T>
BasicTensor<T> ancestral_step_between(const NoiseSchedule& s, const Denoiser<T>& model, const BasicTensor<T>& x,
                                      double t_from, double t_to, const BasicTensor<T>* cond, const BasicTensor<T>& eps,
                                      bool clip = true) {
  require_same_shape(x.shape(), eps.shape(), "ancestral_step x/eps");
  const PosteriorCoeffs c = s.posterior_between(t_from, t_to);
  const BasicTensor<T> x0 = predict_x0(model, x, t_from, cond, clip);
  const double sd = t_to == 0.0 ? 0.0 : std::sqrt(c.variance);
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = T(c.coef_x0 * double(x0[i]) + c.coef_xt * double(x[i]) + sd * double(eps[i]));
  return out;
}

// Called after every step with (step index, time reached, state).
template <typename T>
using FrameSink = std::function<void(std::size_t, double, const BasicTensor<T>&)>;

inline CounterRng sampler_rng(std::uint64_t seed, std::uint64_t sample_index) {
  return CounterRng(seed).stream({0x5a3b1e, sample_index});
}

// Runs the reverse process from a given x_T; result stays in the diffusion domain.
template <typename T>
BasicTensor<T> run_sampler(const NoiseSchedule& s, const Denoiser<T>& model, const SamplerSpec& spec,
                           const BasicTensor<T>& x_T, const BasicTensor<T>* cond, std::uint64_t sample_index = 0,
                           const std::type_identity_t<FrameSink<T>>& frames = {}) {
  std::vector<double> grid = sampler_grid(s, spec);
  grid.push_back(0.0);
  const CounterRng rng = sampler_rng(spec.seed, sample_index);
  BasicTensor<T> x = x_T;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double from = grid[i], to = grid[i + 1];
    switch (spec.kind) {
      case SamplerKind::ancestral: {
        const BasicTensor<T> eps = rng.stream({i + 1}).normal_tensor<T>(x.shape());
        x = ancestral_step_between(s, model, x, from, to, cond, eps, spec.clip_x0);
        break;
      }
      case SamplerKind::first_order:
        x = first_order_step(s, model, x, from, to, cond, spec.clip_x0);
        break;
      case SamplerKind::second_order:
        x = second_order_step(s, model, x, from, to, cond, spec.clip_x0, spec.inject_lambda_sign_fault);
        break;
    }
    if (frames) frames(i, to, x);
  }
  return x;
}

template <typename T>
BasicTensor<T> initial_noise(const SamplerSpec& spec, std::uint64_t sample_index, const Shape& shape) {
  return sampler_rng(spec.seed, sample_index).stream({0}).normal_tensor<T>(shape);
}

// Full inference: x_T from the seed, iterate, map back to [0, 1].
template <typename T>
BasicTensor<T> sample(const NoiseSchedule& s, const Denoiser<T>& model, const SamplerSpec& spec, const Shape& shape,
                      const BasicTensor<T>* cond, std::uint64_t sample_index = 0, const std::type_identity_t<FrameSink<T>>& frames = {}) {
  const BasicTensor<T> x = run_sampler(s, model, spec, initial_noise<T>(spec, sample_index, shape), cond, sample_index, frames);
  return to_unit(x);
}

// Exact probability-flow endpoint for Gaussian data N(mu, s2): the flow keeps
// the standardized coordinate fixed, so x0 = mu + s z with
// z = (x_T - sqrt(ab_T) mu) / sqrt(ab_T s2 + 1 - ab_T).
inline double gaussian_flow_endpoint(const NoiseSchedule& s, double mu, double s2, double x_T, double t_start) {
  const double ab = s.alpha_bar_at(t_start);
  return mu + std::sqrt(s2) * (x_T - std::sqrt(ab) * mu) / std::sqrt(ab * s2 + 1.0 - ab);
}

}  // namespace acdmsr
