#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "clonebo/error.hpp"

namespace clonebo {

// Measurement noise is tempered by the largest conditioning-set size:
// sigma = sigma_tilde / sqrt(n_cond_max).
struct LikelihoodParams {
  double sigma_tilde = 0.25;
  std::size_t n_cond_max = 75;
  double var_floor = 1e-12;

  double sigma() const { return sigma_tilde / std::sqrt(static_cast<double>(n_cond_max)); }

  static LikelihoodParams with_sigma(double sigma, double var_floor = 1e-12) {
    return LikelihoodParams{sigma, 1, var_floor};
  }

  void validate() const {
    if (!(sigma_tilde > 0.0)) fail(ErrorKind::config, "sigma_tilde must be positive");
    if (n_cond_max == 0) fail(ErrorKind::config, "n_cond_max must be positive");
    if (!(var_floor > 0.0)) fail(ErrorKind::config, "var_floor must be positive");
  }
};

// Population (1/N) moments of paired samples. Pairs are summed in sorted
// order so the result depends only on the multiset of (F_n, Y_n) pairs,
// never on the order measurements are listed in.
struct PairMoments {
  std::size_t n = 0;
  double mean_f = 0.0;
  double mean_y = 0.0;
  double var_f = 0.0;
  double var_y = 0.0;
  double cov = 0.0;
};

inline PairMoments pair_moments(std::span<const double> f, std::span<const double> y) {
  if (f.size() != y.size()) fail(ErrorKind::malformed_input, "fitness and measurement vectors differ in length");
  std::vector<std::pair<double, double>> pairs(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) pairs[i] = {f[i], y[i]};
  std::sort(pairs.begin(), pairs.end());
  PairMoments m;
  m.n = pairs.size();
  if (m.n == 0) return m;
  const double inv_n = 1.0 / static_cast<double>(m.n);
  for (const auto& [a, b] : pairs) {
    m.mean_f += a;
    m.mean_y += b;
  }
  m.mean_f *= inv_n;
  m.mean_y *= inv_n;
  for (const auto& [a, b] : pairs) {
    const double da = a - m.mean_f;
    const double db = b - m.mean_y;
    m.var_f += da * da;
    m.var_y += db * db;
    m.cov += da * db;
  }
  m.var_f *= inv_n;
  m.var_y *= inv_n;
  m.cov *= inv_n;
  return m;
}

inline double correlation_score(const PairMoments& m, double sigma, double var_floor = 1e-12) {
  if (m.n < 2) fail(ErrorKind::insufficient_data, "correlation score needs at least two measurements");
  if (m.var_f < var_floor) return 0.0;
  return std::sqrt(static_cast<double>(m.n)) * m.cov / (sigma * std::sqrt(m.var_f));
}

// R = sqrt(N) Cov(F, Y) / (sigma Std(F)), which equals
// sqrt(N) Std(Y) Cor(F, Y) / sigma and stays defined when Y is constant.
inline double correlation_score(std::span<const double> f, std::span<const double> y, double sigma,
                                double var_floor = 1e-12) {
  return correlation_score(pair_moments(f, y), sigma, var_floor);
}

namespace detail {

// exp(x^2) erfc(x) for x >= 0.
inline double erfcx_nonnegative(double x) {
  if (x < 10.0) return std::exp(x * x) * std::erfc(x);
  // Asymptotic series; at x >= 10 the terms shrink by (2k-1)/(2x^2) <= 1/200
  // for the first dozens of terms, far past double precision.
  const double inv_two_x2 = 1.0 / (2.0 * x * x);
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= -(2.0 * k - 1.0) * inv_two_x2;
    sum += term;
    if (std::abs(term) < 1e-18 * std::abs(sum)) break;
  }
  return sum / (x * std::sqrt(std::numbers::pi));
}

}  // namespace detail

// g(R) = R^2 / 2 + log Phi(R), evaluated without cancellation: for R < 0 the
// Gaussian tail factor exp(-R^2/2) is folded into the scaled complementary
// error function.
inline double half_r2_log_phi(double r) {
  if (r >= 0.0) {
    return 0.5 * r * r + std::log1p(-0.5 * std::erfc(r / std::numbers::sqrt2));
  }
  return std::log(0.5 * detail::erfcx_nonnegative(-r / std::numbers::sqrt2));
}

// log p(Y | F) up to an additive constant, with T ~ Uniform(0, inf) and
// C ~ Uniform(-inf, inf) integrated out of Y ~ N(T F + C, sigma^2 I).
inline double log_marginal_likelihood(const PairMoments& m, const LikelihoodParams& params) {
  const double r = correlation_score(m, params.sigma(), params.var_floor);
  return -0.5 * std::log(std::max(m.var_f, params.var_floor)) + half_r2_log_phi(r);
}

inline double log_marginal_likelihood(std::span<const double> f, std::span<const double> y,
                                      const LikelihoodParams& params) {
  return log_marginal_likelihood(pair_moments(f, y), params);
}

// Fewer than two measurements carry no information about T and C; the
// likelihood is then flat and contributes nothing to importance weights.
inline double log_likelihood_or_flat(std::span<const double> f, std::span<const double> y,
                                     const LikelihoodParams& params) {
  if (y.size() < 2) return 0.0;
  return log_marginal_likelihood(f, y, params);
}

}  // namespace clonebo
