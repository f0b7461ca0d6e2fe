#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support/oracles.hpp"

namespace {

using namespace clonebo;
using clonebo::testing::reference_g;

TEST(CorrelationScore, HandValues) {
  const std::vector<double> f{0, 1}, y{0, 1}, y_rev{1, 0}, y_const{3, 3};
  EXPECT_NEAR(correlation_score(f, y, 1.0), std::sqrt(2.0) * 0.25 / 0.5, 1e-15);
  EXPECT_NEAR(correlation_score(f, y_rev, 1.0), -0.7071067811865476, 1e-15);
  EXPECT_EQ(correlation_score(f, y_const, 1.0), 0.0);
}

TEST(CorrelationScore, FlooredVarianceGivesZero) {
  const std::vector<double> f{2, 2, 2}, y{0, 1, 2};
  EXPECT_EQ(correlation_score(f, y, 1.0), 0.0);
}

TEST(CorrelationScore, NeedsTwoMeasurements) {
  const std::vector<double> one{1.0};
  EXPECT_THROW(correlation_score(one, one, 1.0), Error);
  EXPECT_THROW(log_marginal_likelihood(one, one, LikelihoodParams{}), Error);
  EXPECT_EQ(log_likelihood_or_flat(one, one, LikelihoodParams{}), 0.0);
}

TEST(PairMoments, OrderIndependentBitForBit) {
  Rng rng(1);
  std::normal_distribution<double> normal;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> f(9), y(9);
    for (std::size_t i = 0; i < 9; ++i) {
      f[i] = normal(rng);
      y[i] = normal(rng);
    }
    const auto a = pair_moments(f, y);
    std::vector<std::size_t> p{8, 3, 1, 0, 7, 2, 6, 5, 4};
    std::vector<double> fp(9), yp(9);
    for (std::size_t i = 0; i < 9; ++i) {
      fp[i] = f[p[i]];
      yp[i] = y[p[i]];
    }
    const auto b = pair_moments(fp, yp);
    EXPECT_EQ(a.cov, b.cov);
    EXPECT_EQ(a.var_f, b.var_f);
  }
}

TEST(Kernel, KnownValues) {
  EXPECT_NEAR(half_r2_log_phi(0.0), std::log(0.5), 1e-16);
  const double r = -40.0;
  const double asymptotic = -std::log(40.0 * std::sqrt(2.0 * std::numbers::pi)) + std::log(1.0 - 1.0 / 1600.0 + 3.0 / (1600.0 * 1600.0));
  EXPECT_NEAR(half_r2_log_phi(r), asymptotic, 1e-8);
  const double diff = half_r2_log_phi(5.0) - half_r2_log_phi(-5.0);
  const double ref = reference_g(5.0) - reference_g(-5.0);
  EXPECT_NEAR(diff, ref, 1e-9 * std::abs(ref));
}

TEST(Kernel, MatchesHighPrecisionAcrossRange) {
  for (double r = -50.0; r <= 50.0; r += 0.37) {
    const double ref = reference_g(r);
    EXPECT_NEAR(half_r2_log_phi(r), ref, 1e-9 * std::max(std::abs(ref), 1e-300)) << "r = " << r;
  }
}

TEST(Kernel, FiniteAndMonotoneAtExtremes) {
  double prev = -std::numeric_limits<double>::infinity();
  for (double r = -1e3; r <= 1e3; r += 0.5) {
    const double g = half_r2_log_phi(r);
    ASSERT_TRUE(std::isfinite(g)) << r;
    ASSERT_GE(g, prev) << r;
    prev = g;
  }
}

TEST(MarginalLikelihood, ClosedFormHandValue) {
  // F=(0,1), Y=(0,1), sigma=1: Var F = 1/4, R = 1/sqrt 2.
  const std::vector<double> f{0, 1}, y{0, 1};
  const double expected = -0.5 * std::log(0.25) + 0.25 + std::log(0.5 * std::erfc(-0.5));
  EXPECT_NEAR(log_marginal_likelihood(f, y, LikelihoodParams::with_sigma(1.0)), expected, 1e-14);
}

TEST(MarginalLikelihood, TemperedSigma) {
  LikelihoodParams p;
  p.sigma_tilde = 0.25;
  p.n_cond_max = 75;
  EXPECT_NEAR(p.sigma(), 0.25 / std::sqrt(75.0), 1e-17);
}

TEST(MarginalLikelihood, AffineAndShiftLaws) {
  Rng rng(5);
  std::normal_distribution<double> normal;
  const LikelihoodParams params;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + uniform_index(rng, 9);
    std::vector<double> f(n), y(n), g(n), yc(n);
    const double a = std::exp(std::uniform_real_distribution<double>(-3, 3)(rng));
    const double b = 4 * normal(rng), c = 4 * normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = normal(rng);
      y[i] = 0.5 * f[i] + normal(rng);
      g[i] = a * f[i] + b;
      yc[i] = y[i] + c;
    }
    const double base = log_marginal_likelihood(f, y, params);
    EXPECT_NEAR(log_marginal_likelihood(g, y, params) - base, -std::log(a), 1e-10);
    EXPECT_NEAR(log_marginal_likelihood(f, yc, params), base, 1e-13 * std::max(1.0, std::abs(base)));
  }
}

TEST(MarginalLikelihood, IncreasingInAgreementAtFixedVariance) {
  const std::vector<double> y{-1.2, 0.3, 0.9, -0.4, 0.4};
  const std::vector<double> z{0.5, -1.0, 0.8, 0.6, -0.9};
  // Centre and orthonormalize z against y so F(theta) has fixed variance.
  auto centred = [](std::vector<double> v) {
    double m = 0;
    for (double x : v) m += x / static_cast<double>(v.size());
    for (double& x : v) x -= m;
    return v;
  };
  auto yc = centred(y), zc = centred(z);
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  const double proj = dot(zc, yc) / dot(yc, yc);
  for (std::size_t i = 0; i < zc.size(); ++i) zc[i] -= proj * yc[i];
  const double ny = std::sqrt(dot(yc, yc)), nz = std::sqrt(dot(zc, zc));
  double prev = -std::numeric_limits<double>::infinity();
  for (double theta = std::numbers::pi; theta >= 0.0; theta -= 0.1) {
    std::vector<double> f(y.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::cos(theta) * yc[i] / ny + std::sin(theta) * zc[i] / nz;
    const double v = log_marginal_likelihood(f, y, LikelihoodParams{});
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Oracle, MatchesClosedFormOnFixedCase) {
  const std::vector<double> y{0.1, 0.9, 2.1};
  const std::vector<double> f1{0, 1, 2}, f2{0, 2, 1};
  const double sigma = 0.5;
  const auto params = LikelihoodParams::with_sigma(sigma);
  const auto q1 = numeric_integration_oracle(f1, y, sigma);
  const auto q2 = numeric_integration_oracle(f2, y, sigma);
  ASSERT_TRUE(q1.converged && q2.converged);
  const double closed = log_marginal_likelihood(f1, y, params) - log_marginal_likelihood(f2, y, params);
  EXPECT_NEAR(q1.log_value - q2.log_value, closed, 1e-4);
  // Frozen from a 40-digit evaluation of the same expression.
  EXPECT_NEAR(closed, 3.4957137378214071, 1e-12);
}

TEST(Oracle, TauDoublingIsStable) {
  const std::vector<double> y{0.3, -0.2, 1.0, 0.5, -0.7};
  const std::vector<double> f1{0.1, -0.3, 0.8, 0.2, -0.4}, f2{-0.5, 0.2, 0.4, -0.1, 0.3};
  QuadratureOptions wide;
  wide.tau = 2e3;
  const double d1 = numeric_integration_oracle(f1, y, 0.4).log_value - numeric_integration_oracle(f2, y, 0.4).log_value;
  const double d2 =
      numeric_integration_oracle(f1, y, 0.4, wide).log_value - numeric_integration_oracle(f2, y, 0.4, wide).log_value;
  EXPECT_LT(std::abs(d1 - d2), 1e-5);
}

// At fixed Var F the data stop distinguishing F vectors as sigma grows. Across
// different variances the -1/2 log Var F term remains, so the check uses a
// permutation.
TEST(Oracle, LargeSigmaErasesDifferences) {
  const std::vector<double> y{0.3, -0.2, 1.0, 0.5};
  const std::vector<double> f1{0.1, -0.3, 0.8, 0.2}, f2{0.8, 0.2, -0.3, 0.1};
  const double sigma = 1e4;
  const double q = numeric_integration_oracle(f1, y, sigma).log_value - numeric_integration_oracle(f2, y, sigma).log_value;
  EXPECT_NEAR(q, 0.0, 1e-4);
  const auto params = LikelihoodParams::with_sigma(1e6);
  EXPECT_NEAR(log_marginal_likelihood(f1, y, params) - log_marginal_likelihood(f2, y, params), 0.0, 1e-5);
}

TEST(Oracle, FlagsNonConvergenceAndBadInput) {
  const std::vector<double> y{0.1, 0.9, 2.1}, f{0, 1, 2};
  QuadratureOptions coarse;
  coarse.max_levels = 0;
  EXPECT_FALSE(numeric_integration_oracle(f, y, 0.5, coarse).converged);
  const std::vector<double> flat{1, 1, 1};
  EXPECT_THROW(numeric_integration_oracle(flat, y, 0.5), Error);
  EXPECT_THROW(numeric_integration_oracle(f, y, -1.0), Error);
  const std::vector<double> big(11, 0.0);
  EXPECT_THROW(numeric_integration_oracle(big, big, 1.0), Error);
}

TEST(Params, Validation) {
  LikelihoodParams p;
  p.sigma_tilde = 0.0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.n_cond_max = 0;
  EXPECT_THROW(p.validate(), Error);
  p = {};
  p.var_floor = 0.0;
  EXPECT_THROW(p.validate(), Error);
}

}  // namespace
