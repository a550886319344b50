#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these call into the code paths they are used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace oracle {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <class V>
double vec_rel_err(const V& a, const V& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(a.size()); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

/// Kolmogorov-Smirnov distance between the empirical CDF of xs and cdf.
inline double ks_distance(std::vector<double> xs, const std::function<double(double)>& cdf) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, std::abs((i + 1) / n - f), std::abs(f - i / n)});
  }
  return d;
}

/// Direct GPD log-density, written independently from the library.
inline double gpd_logpdf_sum(std::span<const double> xs, double sigma, double eps) {
  double s = 0.0;
  for (double x : xs) {
    const double w = 1.0 + eps * x / sigma;
    if (w <= 0.0) return -std::numeric_limits<double>::infinity();
    s += -std::log(sigma) - (1.0 / eps + 1.0) * std::log(w);
  }
  return s;
}

struct GridFit {
  double sigma;
  double epsilon;
};

/// Brute-force maximiser of the GPD likelihood over a rectangular grid,
/// refined once around the coarse optimum.
inline GridFit gpd_grid_mle(std::span<const double> xs, double s_lo, double s_hi, double e_lo, double e_hi,
                            double step) {
  GridFit best{s_lo, e_lo};
  double best_ll = -std::numeric_limits<double>::infinity();
  auto scan = [&](double slo, double shi, double elo, double ehi, double h) {
    for (double s = slo; s <= shi + 1e-12; s += h) {
      for (double e = elo; e <= ehi + 1e-12; e += h) {
        if (std::abs(e) < 1e-9) continue;
        const double ll = gpd_logpdf_sum(xs, s, e);
        if (ll > best_ll) {
          best_ll = ll;
          best = {s, e};
        }
      }
    }
  };
  scan(s_lo, s_hi, e_lo, e_hi, step * 5);
  const GridFit coarse = best;
  scan(coarse.sigma - 5 * step, coarse.sigma + 5 * step, coarse.epsilon - 5 * step, coarse.epsilon + 5 * step, step);
  return best;
}

/// Standard normal CDF via erfc.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Inverse standard normal CDF by bisection on norm_cdf.
inline double norm_inv(double p) {
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (norm_cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Composite Simpson integral of f(z) * phi(z) over the exercise region
/// z >= z*, where S_T(z) = s * exp((r - q - vol^2/2) t + vol sqrt(t) z)
/// reaches k. The integrand is smooth there, so the rule converges at its
/// full order.
template <typename F>
double exercise_region_integral(double s, double k, double r, double q, double vol, double t, F&& f) {
  const double sd = vol * std::sqrt(t);
  const double drift = (r - q - 0.5 * vol * vol) * t;
  const double b = 12.0;
  const double a = std::max(-12.0, (std::log(k / s) - drift) / sd);
  if (a >= b) return 0.0;
  const int n = 20000;
  const double h = (b - a) / n;
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double z = a + i * h;
    const double st = s * std::exp(drift + sd * z);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    acc += w * f(st) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  }
  return acc * h / 3.0;
}

/// European call price as the discounted lognormal integral of the payoff
/// under risk-neutral drift r - q.
inline double call_by_quadrature(double s, double k, double r, double q, double vol, double t) {
  return std::exp(-r * t) * exercise_region_integral(s, k, r, q, vol, t, [k](double st) { return st - k; });
}

/// Call delta as the discounted pathwise derivative E[S_T / s; S_T > k].
inline double delta_by_quadrature(double s, double k, double r, double q, double vol, double t) {
  return std::exp(-r * t) * exercise_region_integral(s, k, r, q, vol, t, [s](double st) { return st / s; });
}

/// Minimiser interval of sum_i w_i * pinball(z_i - theta, tau) over theta.
/// The objective is convex and piecewise linear; its slope at theta is
/// W(z < theta) - tau * W_total, so the minimisers are the points where the
/// slope changes sign. Returns [lo, hi]; lo is -inf for tau = 0.
inline std::pair<double, double> weighted_pinball_argmin(std::vector<std::pair<double, double>> zw, double tau) {
  std::sort(zw.begin(), zw.end());
  double total = 0.0;
  for (auto& [z, w] : zw) total += w;
  const double target = tau * total;
  const double tol = 1e-12 * total;
  if (target <= tol) return {-std::numeric_limits<double>::infinity(), zw.front().first};
  double below = 0.0;
  for (std::size_t i = 0; i < zw.size(); ++i) {
    const double next = below + zw[i].second;
    if (next > target + tol) {
      // Slope negative just below z_i and positive just above it.
      return {zw[i].first, zw[i].first};
    }
    if (std::abs(next - target) <= tol) {
      // Flat between z_i and z_{i+1}.
      const double hi = (i + 1 < zw.size()) ? zw[i + 1].first : zw[i].first;
      return {zw[i].first, hi};
    }
    below = next;
  }
  return {zw.back().first, zw.back().first};
}

inline double distance_to_interval(double x, std::pair<double, double> iv) {
  if (x < iv.first) return iv.first - x;
  if (x > iv.second) return x - iv.second;
  return 0.0;
}

}  // namespace oracle
