#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "acdmsr/schedule.hpp"

using namespace acdmsr;

namespace {

NoiseSchedule toy() { return NoiseSchedule({0.1, 0.2}); }

}  // namespace

TEST(Schedule, ToyAlphaBar) {
  const auto s = toy();
  EXPECT_NEAR(s.alpha_bar(1), 0.9, 1e-15);
  EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, DefaultLinearEndpoints) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  // product computed here independently
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    const double b = 1e-4 + (0.02 - 1e-4) * double(t - 1) / 999.0;
    EXPECT_NEAR(s.beta(std::size_t(t)), b, 1e-15);
    prod *= 1.0 - b;
    EXPECT_NEAR(s.alpha_bar(std::size_t(t)), prod, 1e-12);
    if (t > 1) EXPECT_LT(s.alpha_bar(std::size_t(t)), s.alpha_bar(std::size_t(t - 1)));
  }
  EXPECT_GT(s.alpha_bar(1000), 0.0);
  EXPECT_LT(s.alpha_bar(1000), 0.01);
}

TEST(Schedule, SingleStep) {
  const auto s = make_linear_schedule(1, 0.3, 0.3);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.7);
}

TEST(Schedule, RejectsBadRange) {
  EXPECT_THROW(make_linear_schedule(10, 0.0, 0.02), Error);
  EXPECT_THROW(make_linear_schedule(10, 0.03, 0.02), Error);
  EXPECT_THROW(make_linear_schedule(10, 0.01, 1.0), Error);
  EXPECT_THROW(make_linear_schedule(0, 0.01, 0.02), Error);
}

TEST(Schedule, AlphaBarProductIdentityExact) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  for (std::size_t t = 1; t < 1000; ++t) EXPECT_EQ(s.alpha_bar(t) * s.alpha(t + 1), s.alpha_bar(t + 1));
}

TEST(Schedule, LambdaValues) {
  const auto s = toy();
  EXPECT_NEAR(s.lambda_of(1.0), 0.5 * std::log(9.0), 1e-12);
  EXPECT_NEAR(s.lambda_of(1.0), 1.0986, 1e-4);
  EXPECT_NEAR(s.lambda_of(2.0), 0.4722, 1e-4);
  EXPECT_THROW(s.lambda_of(0.0), Error);
  EXPECT_THROW(s.lambda_of(2.5), Error);
}

TEST(Schedule, LambdaZeroAtHalf) {
  // beta chosen so alpha_bar[2] = 0.5: 0.8 * (1 - b) = 0.5
  const NoiseSchedule s({0.2, 0.375});
  EXPECT_NEAR(s.lambda(2), 0.0, 1e-15);
}

TEST(Schedule, TOfLambdaToy) {
  const auto s = toy();
  EXPECT_NEAR(s.t_of_lambda(0.5 * (s.lambda(1) + s.lambda(2))), 1.5, 1e-12);
  EXPECT_DOUBLE_EQ(s.t_of_lambda(s.lambda(1)), 1.0);
  EXPECT_DOUBLE_EQ(s.t_of_lambda(s.lambda(2)), 2.0);
  EXPECT_THROW(s.t_of_lambda(s.lambda(1) + 0.01), Error);
  EXPECT_THROW(s.t_of_lambda(s.lambda(2) - 0.01), Error);
}

TEST(Schedule, LambdaRoundTripRandom) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(1.0, 1000.0);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double t = u(gen);
    worst = std::max(worst, std::abs(s.t_of_lambda(s.lambda_of(t)) - t));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Schedule, LambdaStrictlyDecreasing) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  for (std::size_t t = 2; t <= 1000; ++t) EXPECT_LT(s.lambda(t), s.lambda(t - 1));
  // sub-unit extension stays above lambda(1) and is monotone
  EXPECT_GT(s.lambda_of(0.5), s.lambda_of(1.0));
  EXPECT_GT(s.lambda_of(0.1), s.lambda_of(0.5));
}

TEST(Schedule, AlphaBarAtMatchesLambda) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  for (double t : {1.3, 17.5, 499.9, 999.01}) {
    const double ab = s.alpha_bar_at(t);
    EXPECT_NEAR(0.5 * std::log(ab / (1 - ab)), s.lambda_of(t), 1e-10);
  }
  EXPECT_EQ(s.alpha_bar_at(0.0), 1.0);
  EXPECT_EQ(s.alpha_bar_at(40.0), s.alpha_bar(40));
}

TEST(Schedule, Subsample) {
  EXPECT_EQ(subsample_timesteps(8, 4), (std::vector<std::size_t>{8, 6, 4, 2}));
  const auto all = subsample_timesteps(5, 5);
  EXPECT_EQ(all, (std::vector<std::size_t>{5, 4, 3, 2, 1}));
  const auto s40 = subsample_timesteps(1000, 40);
  ASSERT_EQ(s40.size(), 40u);
  EXPECT_EQ(s40.front(), 1000u);
  for (std::size_t i = 1; i < s40.size(); ++i) EXPECT_EQ(s40[i - 1] - s40[i], 25u);
  EXPECT_THROW(subsample_timesteps(10, 11), Error);
  EXPECT_THROW(subsample_timesteps(10, 0), Error);
}

TEST(Schedule, SubsampleLambdaUniform) {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  const auto g = subsample_lambda(s, 10);
  ASSERT_EQ(g.size(), 10u);
  EXPECT_EQ(g.front(), 1000.0);
  EXPECT_EQ(g.back(), 1.0);
  const double d = s.lambda_of(g[1]) - s.lambda_of(g[0]);
  for (std::size_t i = 1; i < g.size(); ++i) {
    EXPECT_LT(g[i], g[i - 1]);
    EXPECT_NEAR(s.lambda_of(g[i]) - s.lambda_of(g[i - 1]), d, 1e-9);
  }
}

TEST(Schedule, PosteriorToy) {
  const auto s = toy();
  const auto c = s.posterior_coeffs(2);
  EXPECT_NEAR(c.coef_x0, std::sqrt(0.9) * 0.2 / 0.28, 1e-12);
  EXPECT_NEAR(c.coef_x0, 0.6776, 1e-4);
  EXPECT_NEAR(c.coef_xt, 0.3194, 1e-4);
  EXPECT_NEAR(c.variance, 0.07143, 1e-5);
  EXPECT_EQ(s.posterior_coeffs(1).variance, 0.0);
  EXPECT_THROW(s.posterior_coeffs(0), Error);
  EXPECT_THROW(s.posterior_coeffs(3), Error);
}

TEST(Schedule, PosteriorMeanIdentityRandomSchedules) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t T = 2 + std::size_t(u(gen) * 200);
    const double b0 = 1e-4 + 0.01 * u(gen), b1 = b0 + 0.05 * u(gen);
    const auto s = make_linear_schedule(T, b0, b1);
    const double x0 = 4 * u(gen) - 2;
    for (std::size_t t = 1; t <= T; ++t) {
      const auto c = s.posterior_coeffs(t);
      const double xt = std::sqrt(s.alpha_bar(t)) * x0;
      EXPECT_NEAR(c.coef_x0 * x0 + c.coef_xt * xt, std::sqrt(s.alpha_bar(t - 1)) * x0, 1e-12);
      EXPECT_GE(c.coef_x0, 0.0);
      EXPECT_GE(c.coef_xt, 0.0);
      EXPECT_LT(c.variance, 1.0 - s.alpha_bar(t));
    }
  }
}

TEST(Schedule, PosteriorBetweenMatchesSingleStep) {
  const auto s = make_linear_schedule(100, 1e-3, 0.05);
  for (std::size_t t = 1; t <= 100; ++t) {
    const auto a = s.posterior_coeffs(t), b = s.posterior_between(double(t), double(t - 1));
    EXPECT_NEAR(a.coef_x0, b.coef_x0, 1e-12);
    EXPECT_NEAR(a.coef_xt, b.coef_xt, 1e-12);
    EXPECT_NEAR(a.variance, b.variance, 1e-12);
  }
}

TEST(Schedule, RejectsInvalidBetas) {
  EXPECT_THROW(NoiseSchedule({0.2, 0.1}), Error);
  EXPECT_THROW(NoiseSchedule({0.0, 0.1}), Error);
  EXPECT_THROW(NoiseSchedule({}), Error);
}
