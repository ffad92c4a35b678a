#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "acdmsr/harness.hpp"

namespace acdmsr {

struct OracleCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct OracleOptions {
  double mu = 0.3, sd = 0.25;
  std::size_t chains = 1000;
  std::uint64_t seed = 0;
  bool inject_lambda_sign_fault = false;
};

// Least-squares slope of -log(err) against log(N).
inline double fitted_order(const std::vector<double>& ns, const std::vector<double>& errs) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    mx += std::log(ns[i]) / double(ns.size());
    my += std::log(errs[i]) / double(ns.size());
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    sxy += (std::log(ns[i]) - mx) * (std::log(errs[i]) - my);
    sxx += (std::log(ns[i]) - mx) * (std::log(ns[i]) - mx);
  }
  return -sxy / sxx;
}

inline double rms_diff(const TensorD& a, const TensorD& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc / double(a.size()));
}

struct ConvergenceStudy {
  std::vector<double> ns{10, 20, 40, 80};
  std::vector<double> errors;
  double slope = 0;
};

// Error against a 10^4-step second-order reference on a lambda-uniform grid.
inline ConvergenceStudy convergence_study(const NoiseSchedule& s, const OracleOptions& o, SamplerKind kind) {
  const AnalyticGaussianDenoiser<double> d(s, o.mu, o.sd * o.sd);
  const TensorD x_T = CounterRng(o.seed).stream({0xc0c0}).normal_tensor<double>({o.chains});
  SamplerSpec sp;
  sp.spacing = Spacing::uniform_lambda;
  sp.clip_x0 = false;
  sp.kind = SamplerKind::second_order;
  sp.steps = 10000;
  const auto ref = run_sampler(s, d, sp, x_T, static_cast<const TensorD*>(nullptr));
  ConvergenceStudy st;
  sp.kind = kind;
  sp.inject_lambda_sign_fault = o.inject_lambda_sign_fault;
  for (double n : st.ns) {
    sp.steps = std::size_t(n);
    st.errors.push_back(rms_diff(run_sampler(s, d, sp, x_T, static_cast<const TensorD*>(nullptr)), ref));
  }
  st.slope = fitted_order(st.ns, st.errors);
  return st;
}

// Terminal error against the exact flow endpoint at N steps.
inline double terminal_error(const AnalyticProblem& p, SamplerKind kind, std::size_t n, bool fault = false) {
  SamplerSpec sp;
  sp.kind = kind;
  sp.steps = n;
  sp.spacing = Spacing::uniform_lambda;
  sp.clip_x0 = false;
  sp.seed = 1;
  sp.inject_lambda_sign_fault = fault;
  return run_analytic(p, sp).ref_rmse;
}

inline NoiseSchedule oracle_schedule() { return make_linear_schedule(1000, 1e-4, 0.02); }

// Monotone alpha_bar and lambda, exact lambda round-trip, zero variance at t=1.
inline OracleCheck check_schedule(const OracleOptions&) {
  const NoiseSchedule s = oracle_schedule();
  bool ok = s.posterior_coeffs(1).variance == 0.0;
  double worst = 0;
  for (std::size_t t = 1; t <= s.T(); ++t) {
    if (t > 1) ok = ok && s.alpha_bar(t) < s.alpha_bar(t - 1) && s.lambda(t) < s.lambda(t - 1);
    worst = std::max(worst, std::abs(s.t_of_lambda(s.lambda_of(double(t))) - double(t)));
    const double tf = double(t) - 0.37;
    if (tf >= 1.0) worst = std::max(worst, std::abs(s.t_of_lambda(s.lambda_of(tf)) - tf));
  }
  return {"schedule", ok && worst < 1e-9, "round-trip max error " + fmt(worst, 12)};
}

// Posterior mean identity at eps = 0.
inline OracleCheck check_posterior(const OracleOptions&) {
  const NoiseSchedule s = oracle_schedule();
  double worst = 0;
  for (std::size_t t = 1; t <= s.T(); ++t) {
    const auto c = s.posterior_coeffs(t);
    worst = std::max(worst, std::abs(c.coef_x0 + c.coef_xt * std::sqrt(s.alpha_bar(t)) - std::sqrt(s.alpha_bar(t - 1))));
  }
  return {"posterior", worst < 1e-12, "max identity residual " + fmt(worst, 15)};
}

inline OracleCheck check_forward_marginal(const OracleOptions& o) {
  const NoiseSchedule s = oracle_schedule();
  bool ok = true;
  std::ostringstream d;
  const double x0v = 0.5;
  for (std::size_t t : {10u, 500u, 1000u}) {
    const auto eps = forward_noise<double>(o.seed, 0, t, {10000});
    const auto xt = q_sample(s, TensorD({10000}, x0v), t, eps).x_t;
    double m = 0, v = 0;
    for (std::size_t i = 0; i < xt.size(); ++i) m += xt[i] / 1e4;
    for (std::size_t i = 0; i < xt.size(); ++i) v += (xt[i] - m) * (xt[i] - m) / (1e4 - 1);
    const double dm = std::abs(m - std::sqrt(s.alpha_bar(t)) * x0v), rv = v / (1 - s.alpha_bar(t));
    ok = ok && dm <= 0.02 && std::abs(rv - 1) <= 0.05;
    d << "t=" << t << " dmean=" << fmt(dm, 4) << " var_ratio=" << fmt(rv, 4) << " ";
  }
  return {"forward_marginal", ok, d.str()};
}

inline std::vector<OracleCheck> check_convergence(const OracleOptions& o) {
  const NoiseSchedule s = oracle_schedule();
  const auto f = convergence_study(s, o, SamplerKind::first_order);
  const auto so = convergence_study(s, o, SamplerKind::second_order);
  return {{"convergence_first_order", f.slope >= 0.7 && f.slope <= 1.3, "slope " + fmt(f.slope, 3)},
          {"convergence_second_order", so.slope >= 1.6 && so.slope <= 2.4, "slope " + fmt(so.slope, 3)}};
}

inline std::vector<OracleCheck> check_ordering_and_plateau(const OracleOptions& o) {
  const NoiseSchedule s = oracle_schedule();
  const auto p = make_analytic_problem(s, o.mu, o.sd, 1, {o.chains}, o.seed);
  const double a = terminal_error(p, SamplerKind::ancestral, 40);
  const double f = terminal_error(p, SamplerKind::first_order, 40);
  const double so = terminal_error(p, SamplerKind::second_order, 40, o.inject_lambda_sign_fault);
  SamplerSpec sp;
  sp.kind = SamplerKind::second_order;
  sp.spacing = Spacing::uniform_lambda;
  sp.clip_x0 = false;
  sp.inject_lambda_sign_fault = o.inject_lambda_sign_fault;
  sp.steps = 40;
  const double p40 = run_analytic(p, sp).psnr;
  sp.steps = 1000;
  const double p1000 = run_analytic(p, sp).psnr;
  return {{"ordering_at_40", a > f && f > so, "ancestral " + fmt(a) + " first " + fmt(f) + " second " + fmt(so)},
          {"plateau_at_40", std::abs(p40 - p1000) <= 0.1, "psnr N=40 " + fmt(p40, 4) + " N=1000 " + fmt(p1000, 4)}};
}

// Ancestral sampling with N = T over 10^4 chains recovers N(mu, sd^2).
inline OracleCheck check_distribution_recovery(const OracleOptions& o) {
  const NoiseSchedule s = oracle_schedule();
  const AnalyticGaussianDenoiser<double> d(s, o.mu, o.sd * o.sd);
  SamplerSpec sp;
  sp.kind = SamplerKind::ancestral;
  sp.steps = s.T();
  sp.clip_x0 = false;
  sp.seed = o.seed;
  const auto x = run_sampler(s, d, sp, CounterRng(o.seed).stream({0xd1}).normal_tensor<double>({10000}),
                             static_cast<const TensorD*>(nullptr));
  double m = 0, v = 0;
  for (std::size_t i = 0; i < x.size(); ++i) m += x[i] / 1e4;
  for (std::size_t i = 0; i < x.size(); ++i) v += (x[i] - m) * (x[i] - m) / (1e4 - 1);
  const double rv = v / (o.sd * o.sd);
  return {"distribution_recovery", std::abs(m - o.mu) <= 0.03 && std::abs(rv - 1) <= 0.06,
          "mean " + fmt(m, 4) + " var_ratio " + fmt(rv, 4)};
}

// Every parameter gradient against central differences on a 16x16 instance.
inline OracleCheck check_denoiser_gradients(const OracleOptions& o) {
  const UNetConfig cfg{1, 1, 4, 8, o.seed};
  ParameterSet<double> params = CondUNet<double>::init(cfg);
  const auto x = forward_noise<double>(o.seed, 1, 0, {1, 16, 16});
  const auto c = forward_noise<double>(o.seed, 1, 1, {1, 16, 16});
  const auto y = forward_noise<double>(o.seed, 1, 2, {1, 16, 16});
  auto loss_of = [&](const ParameterSet<double>& p, bool trainable, Graph<double>& g) {
    const CondUNet<double> net(cfg, p);
    return ops::mse(g, net.forward(g, x, 321.0, c, trainable), g.constant(y));
  };
  Graph<double> g;
  const auto grads = g.reverse_gradients(loss_of(params, true, g));
  double worst = 0;
  const double h = 1e-3;
  for (auto& [name, t] : params) {
    const auto& gr = grads.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t[i];
      Graph<double> g1, g2;
      t[i] = keep + h;
      const double up = g1.value(loss_of(params, false, g1))[0];
      t[i] = keep - h;
      const double dn = g2.value(loss_of(params, false, g2))[0];
      t[i] = keep;
      const double fd = (up - dn) / (2 * h);
      worst = std::max(worst, std::abs(fd - gr[i]) / std::max({std::abs(fd), std::abs(gr[i]), 1e-6}));
    }
  }
  return {"denoiser_gradients", worst < 1e-3, "max relative error " + fmt(worst, 8)};
}

inline OracleCheck check_metric_units(const OracleOptions& o) {
  const double p = psnr(Tensor({3, 16, 16}, 0.0f), Tensor({3, 16, 16}, 0.5f));
  const Tensor img = CounterRng(o.seed).normal_tensor<float>({3, 16, 16});
  const double ss = ssim(img, img);
  return {"metric_units", std::abs(p - 6.0206) <= 1e-3 && std::abs(ss - 1) <= 1e-9, "psnr " + fmt(p, 4) + " ssim " + fmt(ss, 12)};
}

inline std::vector<OracleCheck> run_oracle_suite(const OracleOptions& o) {
  std::vector<OracleCheck> out{check_schedule(o), check_posterior(o), check_forward_marginal(o)};
  for (auto& c : check_convergence(o)) out.push_back(c);
  for (auto& c : check_ordering_and_plateau(o)) out.push_back(c);
  out.push_back(check_distribution_recovery(o));
  out.push_back(check_denoiser_gradients(o));
  out.push_back(check_metric_units(o));
  return out;
}

inline std::string oracle_report(const std::vector<OracleCheck>& checks) {
  std::string s;
  for (const auto& c : checks) s += std::string(c.pass ? "PASS " : "FAIL ") + c.name + "  " + c.detail + "\n";
  return s;
}

}  // namespace acdmsr
