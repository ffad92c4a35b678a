#include <gtest/gtest.h>

#include <cmath>

#include "acdmsr/adam.hpp"
#include "acdmsr/denoiser.hpp"
#include "acdmsr/imaging.hpp"
#include "acdmsr/unet.hpp"
#include "gradcheck.hpp"

using namespace acdmsr;

TEST(AnalyticDenoiser, PointMassPrior) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  const AnalyticGaussianDenoiser<double> d(s, 0.3, 1e-12);
  const TensorD xt({3}, {-2.0, 0.0, 5.0});
  const auto out = analytic_denoise(d, s, xt, 500);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], 0.3, 1e-9);
}

TEST(AnalyticDenoiser, StandardPriorArithmetic) {
  const NoiseSchedule s({0.1, 0.2});
  const AnalyticGaussianDenoiser<double> d(s, 0.0, 1.0);
  const auto out = analytic_denoise(d, s, TensorD({1}, {1.37768}), 2);
  EXPECT_NEAR(out[0], 1.16901, 1e-5);
}

TEST(AnalyticDenoiser, MatchesQuadrature) {
  const NoiseSchedule s({0.2, 0.375});  // alpha_bar[2] = 0.5
  ASSERT_NEAR(s.alpha_bar(2), 0.5, 1e-15);
  const double mu = 1.0, s2 = 0.25, ab = 0.5;
  const AnalyticGaussianDenoiser<double> d(s, mu, s2);
  const auto xt = forward_noise<double>(1, 0, 0, {20});
  const auto out = analytic_denoise(d, s, xt, 2);
  for (std::size_t i = 0; i < xt.size(); ++i) {
    // posterior mean by brute-force integration over a dense x0 grid
    double num = 0, den = 0;
    const double lo = mu - 12 * std::sqrt(s2), hi = mu + 12 * std::sqrt(s2);
    const int n = 200000;
    for (int k = 0; k <= n; ++k) {
      const double x0 = lo + (hi - lo) * k / n;
      const double prior = std::exp(-(x0 - mu) * (x0 - mu) / (2 * s2));
      const double r = xt[i] - std::sqrt(ab) * x0;
      const double like = std::exp(-r * r / (2 * (1 - ab)));
      const double w = (k == 0 || k == n) ? 0.5 : 1.0;
      num += w * x0 * prior * like;
      den += w * prior * like;
    }
    EXPECT_NEAR(out[i], num / den, 1e-4);
  }
}

TEST(AnalyticDenoiser, ConditionActsAsMean) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  const AnalyticGaussianDenoiser<double> d(s, 0.0, 1e-12);
  const TensorD cond({2}, {0.25, -0.5});
  const auto out = d.denoise(TensorD({2}, {3.0, 3.0}), 100.0, &cond);
  EXPECT_NEAR(out[0], 0.25, 1e-9);
  EXPECT_NEAR(out[1], -0.5, 1e-9);
}

TEST(AnalyticDenoiser, MinimizesSquaredLoss) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  const double mu = 0.3, s2 = 0.0625;
  const AnalyticGaussianDenoiser<double> d(s, mu, s2);
  const std::size_t n = 20000;
  const auto z = forward_noise<double>(21, 0, 0, {n});
  const auto eps = forward_noise<double>(21, 0, 1, {n});
  const CounterRng trng(22);
  auto loss = [&](double delta) {
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto t = std::size_t(trng.uniform_int(i, 1, 1000));
      const double x0 = mu + std::sqrt(s2) * z[i];
      const double ab = s.alpha_bar(t);
      const double xt = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps[i];
      const double pred = d.denoise(TensorD({1}, {xt}), double(t), nullptr)[0] + delta;
      acc += (pred - x0) * (pred - x0);
    }
    return acc / double(n);
  };
  const double base = loss(0.0);
  for (double delta : {-0.1, -0.02, 0.01, 0.05}) EXPECT_LT(base, loss(delta)) << delta;
}

TEST(TimeEmbedding, ZeroTime) {
  const auto e = time_embedding(0.0, 4);
  EXPECT_EQ(e, (std::vector<double>{0, 0, 1, 1}));
  EXPECT_THROW(time_embedding(1.0, 5), Error);
}

TEST(TimeEmbedding, BoundedAndDistinct) {
  std::vector<std::vector<double>> all;
  for (int t = 1; t <= 1000; ++t) {
    all.push_back(time_embedding(double(t), 64));
    for (double v : all.back()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
  double min_d = 1e9;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < 64; ++k) d += (all[i][k] - all[j][k]) * (all[i][k] - all[j][k]);
      min_d = std::min(min_d, std::sqrt(d));
    }
  EXPECT_GT(min_d, 0.0);
}

TEST(CondUNet, ShapeAndFinite) {
  const CondUNet<float> net(UNetConfig{});
  EXPECT_LT(param_count(net.params()), 2000000u);
  const auto x = forward_noise<float>(1, 0, 0, {3, 32, 32});
  const auto c = forward_noise<float>(1, 0, 1, {3, 32, 32});
  const auto out = net.apply(x, 500.0, c);
  EXPECT_EQ(out.shape(), x.shape());
  EXPECT_TRUE(out.all_finite());
  EXPECT_EQ(out, net.apply(x, 500.0, c));
}

TEST(CondUNet, AcceptsAnyMultipleOfFour) {
  const CondUNet<float> net(UNetConfig{3, 3, 8, 16, 0});
  const auto x = forward_noise<float>(1, 0, 0, {3, 12, 20});
  EXPECT_EQ(net.apply(x, 3.5, x).shape(), x.shape());
  const auto bad = forward_noise<float>(1, 0, 0, {3, 10, 12});
  EXPECT_THROW(net.apply(bad, 1.0, bad), Error);
}

TEST(CondUNet, RejectsMismatchedCondition) {
  const CondUNet<float> net(UNetConfig{3, 3, 8, 16, 0});
  const auto x = forward_noise<float>(1, 0, 0, {3, 16, 16});
  EXPECT_THROW(net.apply(x, 1.0, forward_noise<float>(1, 0, 1, {3, 8, 8})), Error);
  EXPECT_THROW(net.apply(x, 1.0, forward_noise<float>(1, 0, 1, {1, 16, 16})), Error);
}

TEST(CondUNet, GradientsMatchFiniteDifferences) {
  UNetConfig cfg{1, 1, 4, 8, 3};
  const auto params = CondUNet<double>::init(cfg);
  const auto x = forward_noise<double>(2, 0, 0, {1, 16, 16});
  const auto c = forward_noise<double>(2, 0, 1, {1, 16, 16});
  const auto target = forward_noise<double>(2, 0, 2, {1, 16, 16});
  auto loss_fn = [&](Graph<double>& g, const ParameterSet<double>& p, bool trainable) {
    const CondUNet<double> net(cfg, p);
    auto y = net.forward(g, x, 321.0, c, trainable);
    return ops::mse(g, y, g.constant(target));
  };
  const auto r = testing_util::check_gradients(params, loss_fn);
  EXPECT_EQ(r.checked, param_count(params));
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}

TEST(CondUNet, CheckpointRoundTrip) {
  const CondUNet<float> net(UNetConfig{3, 3, 8, 16, 5});
  const auto back = decode_checkpoint<float>(encode_checkpoint(net.params()));
  const CondUNet<float> again(net.config(), back);
  const auto x = forward_noise<float>(1, 0, 0, {3, 8, 8});
  EXPECT_EQ(net.apply(x, 10.0, x), again.apply(x, 10.0, x));
  auto missing = back;
  missing.erase("in.w");
  EXPECT_THROW(CondUNet<float>(net.config(), missing), Error);
  EXPECT_EQ(unet_config_from_arch(net.arch()).base_width, 8u);
}

TEST(CondUNet, OverfitsSinglePair) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  CondUNet<float> net(UNetConfig{});
  const auto hr = to_diffusion(procedural_texture<float>(32, 32, 3, 4));
  const auto cond = to_diffusion(upsample_bicubic(degrade(procedural_texture<float>(32, 32, 3, 4), 4), 4));
  const auto eps = forward_noise<float>(4, 0, 200, hr.shape());
  const auto xt = q_sample(s, hr, 200, eps).x_t;
  AdamState<float> st;
  st.hyper.lr = 1e-3;
  double first = 0, last = 0;
  for (int step = 0; step < 500; ++step) {
    Graph<float> g;
    auto loss = ops::mse(g, net.forward(g, xt, 200.0, cond, true), g.constant(hr));
    const double l = g.value(loss)[0];
    if (step == 0) first = l;
    last = l;
    adam_step(net.params(), g.reverse_gradients(loss), st);
  }
  EXPECT_LT(last, 0.1 * first) << "initial " << first << " final " << last;
}

TEST(UNetDenoiser, NoiseModeConvertsToX0) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  const CondUNet<double> net(UNetConfig{1, 1, 4, 8, 1});
  const auto x = forward_noise<double>(3, 0, 0, {1, 8, 8});
  const UNetDenoiser<double> img(net, s, Objective::image), noise(net, s, Objective::noise);
  const auto raw = img.denoise(x, 250.0, &x);
  const auto x0 = noise.denoise(x, 250.0, &x);
  const auto expect = x0_from_eps_at(s, x, raw, 250.0);
  for (std::size_t i = 0; i < x0.size(); ++i) EXPECT_NEAR(x0[i], expect[i], 1e-12);
  EXPECT_THROW(img.denoise(x, 250.0, nullptr), Error);
}

TEST(CondUNet, CondSkipReturnsConditionWhenHeadIsZero) {
  UNetConfig cfg{3, 3, 8, 16, 2};
  cfg.cond_skip = true;
  auto params = CondUNet<float>::init(cfg);
  for (auto& [name, t] : params)
    if (name.rfind("out.", 0) == 0) t = Tensor(t.shape());
  const CondUNet<float> skip(cfg, params);
  cfg.cond_skip = false;
  const CondUNet<float> plain(cfg, params);
  const auto x = forward_noise<float>(5, 0, 0, {3, 8, 8});
  const auto c = forward_noise<float>(5, 0, 1, {3, 8, 8});
  EXPECT_EQ(skip.apply(x, 30.0, c), c);
  EXPECT_EQ(plain.apply(x, 30.0, c), Tensor({3, 8, 8}));
  UNetConfig bad{3, 1, 8, 16, 2};
  bad.cond_skip = true;
  EXPECT_THROW(CondUNet<float>(bad).apply(x, 30.0, Tensor({1, 8, 8})), Error);
}

TEST(CondUNet, InputGateScalesByRootAlphaBar) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  UNetConfig cfg{1, 1, 4, 8, 6};
  const CondUNet<double> plain(cfg);
  cfg.input_gate = true;
  const CondUNet<double> gated(cfg, plain.params());
  const auto x = forward_noise<double>(6, 0, 0, {1, 8, 8});
  const auto c = forward_noise<double>(6, 0, 1, {1, 8, 8});
  for (std::size_t t : {1u, 400u, 1000u}) {
    const double k = std::sqrt(s.alpha_bar(t));
    const auto expect = plain.apply(map(x, [k](double v) { return k * v; }), double(t), c);
    const auto got = UNetDenoiser<double>(gated, s, Objective::image).denoise(x, double(t), &c);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-12);
  }
  const auto back = unet_config_from_arch(gated.arch());
  EXPECT_TRUE(back.input_gate);
  EXPECT_FALSE(back.cond_skip);
}

TEST(CondUNet, GradientsWithSkipAndGate) {
  UNetConfig cfg{1, 1, 4, 8, 7};
  cfg.cond_skip = cfg.input_gate = true;
  const auto params = CondUNet<double>::init(cfg);
  const auto x = forward_noise<double>(8, 0, 0, {1, 8, 8});
  const auto c = forward_noise<double>(8, 0, 1, {1, 8, 8});
  const auto target = forward_noise<double>(8, 0, 2, {1, 8, 8});
  auto loss_fn = [&](Graph<double>& g, const ParameterSet<double>& p, bool trainable) {
    const CondUNet<double> net(cfg, p);
    return ops::mse(g, net.forward(g, x, 700.0, c, trainable, 0.3), g.constant(target));
  };
  const auto r = testing_util::check_gradients(params, loss_fn);
  EXPECT_EQ(r.checked, param_count(params));
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
}
