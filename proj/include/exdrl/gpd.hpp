#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace exdrl::gpd {

/// Below this |shape| the exponential (shape = 0) formulas are used.
inline constexpr double kShapeSwitch = 1e-8;

/// Scale and shape of a Generalized Pareto distribution of threshold
/// exceedances. Support is [0, inf) for shape >= 0 and [0, -scale/shape]
/// for shape < 0.
struct GpdParams {
  double sigma = 1.0;
  double epsilon = 0.0;

  /// Throws std::domain_error unless sigma is finite and positive.
  void validate() const;
  /// Upper end of the support (infinity when epsilon >= 0).
  double support_max() const;
};

struct LogLikGrad {
  double d_sigma = 0.0;
  double d_epsilon = 0.0;
};

double cdf(double x, const GpdParams& p);

/// Inverse CDF; pr must lie in [0, 1).
double quantile(double pr, const GpdParams& p);

/// Draws m i.i.d. values by the inverse-CDF transform of uniforms.
std::vector<double> sample(std::mt19937_64& rng, const GpdParams& p, std::size_t m);

/// Summed log-density of xs. Throws std::domain_error for negative values
/// or values outside the support.
double log_likelihood(std::span<const double> xs, const GpdParams& p);

/// Analytic partial derivatives of log_likelihood with respect to sigma and
/// epsilon.
LogLikGrad log_likelihood_grad(std::span<const double> xs, const GpdParams& p);

/// Mean of the distribution, sigma / (1 - epsilon); infinite for epsilon >= 1.
double mean(const GpdParams& p);

struct MleOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-8;
};

struct MleResult {
  GpdParams params;
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Maximum-likelihood fit by gradient ascent on (log sigma, epsilon) with a
/// backtracking line search. The search starts from the moment estimator
/// and keeps every iterate inside the support of the data.
MleResult fit_mle(std::span<const double> xs, const MleOptions& options = {});

}  // namespace exdrl::gpd
