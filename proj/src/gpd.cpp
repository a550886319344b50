#include "exdrl/gpd.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace exdrl::gpd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool exponential_branch(const GpdParams& p) { return std::abs(p.epsilon) < kShapeSwitch; }

void check_point(double x, const GpdParams& p) {
  if (!(x >= 0.0)) {
    throw std::domain_error("gpd: value " + std::to_string(x) + " is below the support");
  }
  if (!exponential_branch(p) && 1.0 + p.epsilon * x / p.sigma < 0.0) {
    throw std::domain_error("gpd: value " + std::to_string(x) + " is above the support");
  }
}

// Log-likelihood that reports infeasible parameters as -inf; used by the line
// search so a trial step outside the support is simply rejected.
double log_likelihood_or_neg_inf(std::span<const double> xs, const GpdParams& p) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma) || !std::isfinite(p.epsilon)) return -kInf;
  const double log_sigma = std::log(p.sigma);
  double total = 0.0;
  if (exponential_branch(p)) {
    for (double x : xs) total += -log_sigma - x / p.sigma;
    return total;
  }
  for (double x : xs) {
    const double t = p.epsilon * x / p.sigma;
    if (t <= -1.0) return -kInf;
    total += -log_sigma - (1.0 / p.epsilon + 1.0) * std::log1p(t);
  }
  return total;
}

}  // namespace

void GpdParams::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::domain_error("gpd: scale must be positive and finite, got " + std::to_string(sigma));
  }
  if (!std::isfinite(epsilon)) throw std::domain_error("gpd: shape must be finite");
}

double GpdParams::support_max() const {
  if (epsilon >= 0.0 || std::abs(epsilon) < kShapeSwitch) return kInf;
  return -sigma / epsilon;
}

double cdf(double x, const GpdParams& p) {
  p.validate();
  check_point(x, p);
  if (exponential_branch(p)) return -std::expm1(-x / p.sigma);
  const double t = p.epsilon * x / p.sigma;
  if (t <= -1.0) return 1.0;
  return -std::expm1(-std::log1p(t) / p.epsilon);
}

double quantile(double pr, const GpdParams& p) {
  p.validate();
  if (!(pr >= 0.0) || !(pr < 1.0)) {
    throw std::domain_error("gpd: probability must lie in [0, 1), got " + std::to_string(pr));
  }
  const double log_survival = std::log1p(-pr);
  if (exponential_branch(p)) return -p.sigma * log_survival;
  return p.sigma / p.epsilon * std::expm1(-p.epsilon * log_survival);
}

std::vector<double> sample(std::mt19937_64& rng, const GpdParams& p, std::size_t m) {
  p.validate();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<double> out(m);
  for (auto& x : out) x = quantile(uniform(rng), p);
  return out;
}

double log_likelihood(std::span<const double> xs, const GpdParams& p) {
  p.validate();
  for (double x : xs) {
    check_point(x, p);
    if (!exponential_branch(p) && 1.0 + p.epsilon * x / p.sigma <= 0.0) {
      throw std::domain_error("gpd: zero density at the support endpoint");
    }
  }
  return log_likelihood_or_neg_inf(xs, p);
}

LogLikGrad log_likelihood_grad(std::span<const double> xs, const GpdParams& p) {
  p.validate();
  LogLikGrad g;
  if (exponential_branch(p)) {
    // Shape derivative is the limit y^2/2 - y of the general expression.
    for (double x : xs) {
      check_point(x, p);
      const double y = x / p.sigma;
      g.d_sigma += -1.0 / p.sigma + y / p.sigma;
      g.d_epsilon += 0.5 * y * y - y;
    }
    return g;
  }
  const double e = p.epsilon;
  const double s = p.sigma;
  for (double x : xs) {
    check_point(x, p);
    const double w = 1.0 + e * x / s;
    if (w <= 0.0) throw std::domain_error("gpd: zero density at the support endpoint");
    g.d_sigma += -1.0 / s + (1.0 + e) * x / (s * s * w);
    g.d_epsilon += std::log1p(e * x / s) / (e * e) - (1.0 / e + 1.0) * (x / s) / w;
  }
  return g;
}

double mean(const GpdParams& p) {
  p.validate();
  if (p.epsilon >= 1.0) return kInf;
  return p.sigma / (1.0 - p.epsilon);
}

MleResult fit_mle(std::span<const double> xs, const MleOptions& options) {
  if (xs.size() < 2) throw std::invalid_argument("gpd::fit_mle needs at least two values");
  for (double x : xs) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::domain_error("gpd::fit_mle: values must be finite and >= 0");
  }
  const double n = static_cast<double>(xs.size());
  const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - m) * (x - m);
  var /= (n - 1.0);
  if (!(m > 0.0) || !(var > 0.0)) throw std::domain_error("gpd::fit_mle: degenerate data");

  const double x_max = *std::max_element(xs.begin(), xs.end());
  double eps0 = std::clamp(0.5 * (1.0 - m * m / var), -0.4, 0.9);
  double sig0 = 0.5 * m * (m * m / var + 1.0);
  if (eps0 < 0.0 && sig0 <= -eps0 * x_max) eps0 = 0.0;
  if (eps0 == 0.0) sig0 = m;

  // Coordinates are (log sigma, epsilon); objective is the mean log-likelihood.
  auto objective = [&](double log_sigma, double eps) {
    return log_likelihood_or_neg_inf(xs, GpdParams{std::exp(log_sigma), eps}) / n;
  };
  auto gradient = [&](double log_sigma, double eps) {
    const GpdParams p{std::exp(log_sigma), eps};
    const LogLikGrad g = log_likelihood_grad(xs, p);
    return std::array<double, 2>{g.d_sigma * p.sigma / n, g.d_epsilon / n};
  };

  double u0 = std::log(sig0);
  double u1 = eps0;
  double f = objective(u0, u1);
  auto g = gradient(u0, u1);
  // BFGS inverse-Hessian approximation (for the minimisation of -f).
  double h00 = 1.0, h01 = 0.0, h11 = 1.0;

  MleResult result;
  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it;
    if (std::hypot(g[0], g[1]) < options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    // Ascent direction d = H * g.
    double d0 = h00 * g[0] + h01 * g[1];
    double d1 = h01 * g[0] + h11 * g[1];
    double slope = d0 * g[0] + d1 * g[1];
    if (!(slope > 0.0)) {
      h00 = 1.0, h01 = 0.0, h11 = 1.0;
      d0 = g[0];
      d1 = g[1];
      slope = d0 * g[0] + d1 * g[1];
    }
    double step = 1.0;
    double f_new = -kInf;
    double n0 = u0, n1 = u1;
    for (int ls = 0; ls < 60; ++ls) {
      n0 = u0 + step * d0;
      n1 = u1 + step * d1;
      f_new = objective(n0, n1);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * step * slope) break;
      step *= 0.5;
    }
    // A failed or negligible step means the objective is flat to rounding.
    if (!std::isfinite(f_new) || f_new - f <= 1e-15 * std::abs(f)) {
      result.converged = std::hypot(g[0], g[1]) < 1e-6;
      if (std::isfinite(f_new) && f_new >= f) {
        u0 = n0;
        u1 = n1;
        f = f_new;
      }
      break;
    }
    const auto g_new = gradient(n0, n1);
    // Curvature pair for the minimisation of -f.
    const double s0 = n0 - u0, s1 = n1 - u1;
    const double y0 = -(g_new[0] - g[0]), y1 = -(g_new[1] - g[1]);
    const double sy = s0 * y0 + s1 * y1;
    if (sy > 1e-12) {
      const double hy0 = h00 * y0 + h01 * y1;
      const double hy1 = h01 * y0 + h11 * y1;
      const double yhy = y0 * hy0 + y1 * hy1;
      const double c = (sy + yhy) / (sy * sy);
      h00 += c * s0 * s0 - (hy0 * s0 + s0 * hy0) / sy;
      h01 += c * s0 * s1 - (hy0 * s1 + s0 * hy1) / sy;
      h11 += c * s1 * s1 - (hy1 * s1 + s1 * hy1) / sy;
    }
    u0 = n0;
    u1 = n1;
    f = f_new;
    g = g_new;
  }
  result.params = GpdParams{std::exp(u0), u1};
  result.log_likelihood = f * n;
  return result;
}

}  // namespace exdrl::gpd
