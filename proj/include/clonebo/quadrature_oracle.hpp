#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "clonebo/error.hpp"
#include "clonebo/likelihood.hpp"
#include "clonebo/random.hpp"

namespace clonebo {

struct GaussLegendre {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

inline GaussLegendre gauss_legendre(std::size_t n) {
  GaussLegendre rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = 0.0;
      for (std::size_t j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / static_cast<double>(j);
      }
      dp = static_cast<double>(n) * (z * p0 - p1) / (z * z - 1.0);
      const double dz = p0 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    rule.nodes[i] = -z;
    rule.nodes[n - 1 - i] = z;
    rule.weights[i] = rule.weights[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return rule;
}

struct QuadratureResult {
  double log_value = 0.0;
  bool converged = false;
  std::size_t levels = 0;
  double last_change = std::numeric_limits<double>::infinity();
};

struct QuadratureOptions {
  double tau = 1e3;
  std::size_t initial_panels = 8;
  std::size_t max_levels = 6;
  std::size_t nodes_per_panel = 8;
  double tolerance = 1e-9;  // absolute change of the log integral between levels
};

namespace detail {

inline double oracle_log_integral(std::span<const double> f, std::span<const double> y, double sigma,
                                  double tau, std::size_t panels, const GaussLegendre& rule) {
  const auto n = static_cast<double>(f.size());
  const PairMoments m = pair_moments(f, y);
  const double beta_hat = m.cov / m.var_f;
  const double beta_sd = sigma / (std::sqrt(n) * std::sqrt(m.var_f));
  double beta_lo = std::max(0.0, beta_hat - 12.0 * beta_sd);
  double beta_hi = beta_hat > 0.0 ? beta_hat + 12.0 * beta_sd
                                  : 40.0 * beta_sd / std::max(1.0, -beta_hat / beta_sd);

  const double prec_m = n / (sigma * sigma) + 1.0 / (tau * tau);
  const double m_sd = 1.0 / std::sqrt(prec_m);
  const double log_norm_y = -0.5 * n * std::log(2.0 * std::numbers::pi * sigma * sigma);
  const double log_norm_m = -0.5 * std::log(2.0 * std::numbers::pi * tau * tau);

  std::vector<double> terms;
  terms.reserve(panels * panels * rule.nodes.size() * rule.nodes.size());
  const double beta_width = (beta_hi - beta_lo) / static_cast<double>(panels);
  const double u_lo = -12.0;
  const double u_width = 24.0 / static_cast<double>(panels);
  for (std::size_t pb = 0; pb < panels; ++pb) {
    const double b0 = beta_lo + beta_width * static_cast<double>(pb);
    for (std::size_t ib = 0; ib < rule.nodes.size(); ++ib) {
      const double beta = b0 + 0.5 * beta_width * (rule.nodes[ib] + 1.0);
      const double log_wb = std::log(0.5 * beta_width * rule.weights[ib]);
      double resid_sum = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) resid_sum += y[i] - beta * f[i];
      const double m_center = resid_sum / (sigma * sigma) / prec_m;
      for (std::size_t pm = 0; pm < panels; ++pm) {
        const double u0 = u_lo + u_width * static_cast<double>(pm);
        for (std::size_t im = 0; im < rule.nodes.size(); ++im) {
          const double u = u0 + 0.5 * u_width * (rule.nodes[im] + 1.0);
          const double mu = m_center + m_sd * u;
          double ss = 0.0;
          for (std::size_t i = 0; i < f.size(); ++i) {
            const double r = y[i] - beta * f[i] - mu;
            ss += r * r;
          }
          const double log_integrand =
              log_norm_y - 0.5 * ss / (sigma * sigma) + log_norm_m - 0.5 * mu * mu / (tau * tau);
          terms.push_back(log_wb + std::log(0.5 * u_width * rule.weights[im] * m_sd) + log_integrand);
        }
      }
    }
  }
  return log_sum_exp(terms);
}

}  // namespace detail

// Brute-force evaluation of log of the double integral
//   int_0^inf int N(Y; beta F + m 1, sigma^2 I) N(m; 0, tau^2) dm dbeta
// by composite Gauss-Legendre quadrature, doubling the panel count until the
// log value stops moving. Differences across F vectors approach those of
// log_marginal_likelihood as tau grows.
inline QuadratureResult numeric_integration_oracle(std::span<const double> f, std::span<const double> y,
                                                   double sigma, const QuadratureOptions& options = {}) {
  if (f.size() != y.size()) fail(ErrorKind::malformed_input, "fitness and measurement vectors differ in length");
  if (f.size() < 2) fail(ErrorKind::insufficient_data, "quadrature oracle needs at least two measurements");
  if (f.size() > 10) fail(ErrorKind::config, "quadrature oracle is limited to N <= 10");
  if (!(sigma > 0.0)) fail(ErrorKind::config, "sigma must be positive");
  if (pair_moments(f, y).var_f <= 0.0)
    fail(ErrorKind::insufficient_data, "quadrature oracle needs non-constant fitness values");
  const GaussLegendre rule = gauss_legendre(options.nodes_per_panel);
  QuadratureResult result;
  std::size_t panels = options.initial_panels;
  double previous = detail::oracle_log_integral(f, y, sigma, options.tau, panels, rule);
  result.log_value = previous;
  for (std::size_t level = 1; level <= options.max_levels; ++level) {
    panels *= 2;
    const double current = detail::oracle_log_integral(f, y, sigma, options.tau, panels, rule);
    result.last_change = std::abs(current - previous);
    result.log_value = current;
    result.levels = level;
    if (result.last_change < options.tolerance) {
      result.converged = true;
      break;
    }
    previous = current;
  }
  return result;
}

}  // namespace clonebo
