#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "exdrl/gpd.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

using exdrl::gpd::GpdParams;
namespace gpd = exdrl::gpd;

TEST_CASE("cdf hand values") {
  CHECK(gpd::cdf(0.0, {2.0, 0.5}) == 0.0);
  CHECK(gpd::cdf(2.0, {2.0, 0.5}) == doctest::Approx(1.0 - std::pow(1.5, -2.0)).epsilon(1e-14));
  CHECK(gpd::cdf(2.0, {2.0, 0.5}) == doctest::Approx(0.5556).epsilon(1e-4));
  CHECK(gpd::cdf(1.0, {1.0, 0.0}) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("cdf domain errors") {
  CHECK_THROWS_AS(gpd::cdf(-0.1, {1.0, 0.3}), std::domain_error);
  // Bounded support for negative shape: endpoint at sigma / |epsilon| = 2.
  CHECK(gpd::cdf(2.0, {1.0, -0.5}) == 1.0);
  CHECK_THROWS_AS(gpd::cdf(2.5, {1.0, -0.5}), std::domain_error);
  CHECK_THROWS_AS(gpd::cdf(1.0, {0.0, 0.5}), std::domain_error);
  CHECK_THROWS_AS(gpd::cdf(1.0, {-1.0, 0.5}), std::domain_error);
}

TEST_CASE("quantile hand values") {
  CHECK(gpd::quantile(0.0, {2.0, 0.5}) == 0.0);
  CHECK(gpd::quantile(1.0 - std::pow(1.5, -2.0), {2.0, 0.5}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(gpd::quantile(0.5556, {2.0, 0.5}) == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(gpd::quantile(0.99, {1.0, 0.5}) == doctest::Approx(18.0).epsilon(1e-12));
  CHECK_THROWS_AS(gpd::quantile(1.0, {1.0, 0.5}), std::domain_error);
  CHECK_THROWS_AS(gpd::quantile(-1e-3, {1.0, 0.5}), std::domain_error);
}

TEST_CASE("cdf/quantile round trip") {
  for (double sigma : {0.5, 1.0, 2.0}) {
    for (double eps : {-0.3, 0.0, 1e-9, 0.1, 0.5, 0.9, 2.0}) {
      const GpdParams p{sigma, eps};
      for (int k = 0; k <= 1000; ++k) {
        const double pr = (1.0 - 1e-9) * k / 1000.0;
        CHECK(std::abs(gpd::cdf(gpd::quantile(pr, p), p) - pr) < 1e-10);
      }
    }
  }
}

TEST_CASE("cdf is monotone with limits") {
  const GpdParams p{1.3, 0.4};
  double prev = 0.0;
  for (int k = 0; k <= 2000; ++k) {
    const double v = gpd::cdf(0.05 * k, p);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(gpd::cdf(1e12, p) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(gpd::cdf(1e3, {1.0, 0.0}) == 1.0);
}

TEST_CASE("shape -> 0 continuity") {
  for (double sigma : {0.5, 1.0, 3.0}) {
    for (int k = 0; k <= 100; ++k) {
      const double x = 10.0 * sigma * k / 100.0;
      CHECK(std::abs(gpd::cdf(x, {sigma, 1e-8}) - gpd::cdf(x, {sigma, 0.0})) < 1e-6);
    }
  }
}

TEST_CASE("sampler KS distance and mean") {
  std::mt19937_64 rng(7);
  auto xs = gpd::sample(rng, {1.0, 0.3}, 10000);
  const double ks = oracle::ks_distance(xs, [](double x) { return gpd::cdf(x, {1.0, 0.3}); });
  CHECK(ks < 0.02);

  std::mt19937_64 rng2(11);
  auto ys = gpd::sample(rng2, {1.0, 0.5}, 10000);
  const double m = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
  CHECK(std::abs(m - 2.0) < 0.15);
  CHECK(gpd::mean({1.0, 0.5}) == doctest::Approx(2.0));
  CHECK(std::isinf(gpd::mean({1.0, 1.0})));
}

TEST_CASE("sampler is deterministic under a seed") {
  std::mt19937_64 a(42), b(42);
  CHECK(gpd::sample(a, {0.7, 0.2}, 1)[0] == gpd::sample(b, {0.7, 0.2}, 1)[0]);
  CHECK(std::ranges::all_of(gpd::sample(a, {0.7, 0.2}, 100), [](double x) { return x >= 0.0; }));
}

TEST_CASE("log-likelihood hand values") {
  const std::vector<double> zero{0.0};
  CHECK(gpd::log_likelihood(zero, {1.0, 0.5}) == doctest::Approx(0.0));
  const std::vector<double> two{2.0};
  CHECK(gpd::log_likelihood(two, {2.0, 0.5}) ==
        doctest::Approx(-std::log(2.0) - 3.0 * std::log(1.5)).epsilon(1e-14));
  CHECK(gpd::log_likelihood(two, {2.0, 0.5}) == doctest::Approx(-1.9095).epsilon(1e-4));
  const std::vector<double> one{1.0};
  CHECK(gpd::log_likelihood(one, {1.0, 0.0}) == doctest::Approx(-1.0));
  const std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(gpd::log_likelihood(neg, {1.0, 0.5}), std::domain_error);
  const std::vector<double> edge{2.0};
  CHECK_THROWS_AS(gpd::log_likelihood(edge, {1.0, -0.5}), std::domain_error);
}

TEST_CASE("log-likelihood gradient matches finite differences") {
  std::mt19937_64 rng(3);
  for (double sigma : {0.5, 1.0, 2.0}) {
    for (double eps : {0.1, 0.5, 0.9}) {
      const GpdParams p{sigma, eps};
      const auto xs = gpd::sample(rng, {1.0, 0.4}, 50);
      const auto g = gpd::log_likelihood_grad(xs, p);
      const double h = 1e-6;
      const double fd_s = (gpd::log_likelihood(xs, {sigma + h, eps}) - gpd::log_likelihood(xs, {sigma - h, eps})) / (2 * h);
      const double fd_e = (gpd::log_likelihood(xs, {sigma, eps + h}) - gpd::log_likelihood(xs, {sigma, eps - h})) / (2 * h);
      CHECK(oracle::rel_err(g.d_sigma, fd_s) < 1e-5);
      CHECK(oracle::rel_err(g.d_epsilon, fd_e) < 1e-5);
    }
  }
  const std::vector<double> zero{0.0};
  CHECK(gpd::log_likelihood_grad(zero, {1.0, 0.5}).d_sigma == doctest::Approx(-1.0));
}

TEST_CASE("exponential-branch gradient is the shape -> 0 limit") {
  const std::vector<double> xs{0.2, 1.0, 3.5};
  const auto g0 = gpd::log_likelihood_grad(xs, {1.2, 0.0});
  const auto g1 = gpd::log_likelihood_grad(xs, {1.2, 1e-5});
  CHECK(g0.d_sigma == doctest::Approx(g1.d_sigma).epsilon(1e-4));
  CHECK(g0.d_epsilon == doctest::Approx(g1.d_epsilon).epsilon(1e-3));
}

TEST_CASE("MLE recovers parameters and agrees with grid search") {
  std::mt19937_64 rng(2024);
  const auto xs = gpd::sample(rng, {1.0, 0.3}, 10000);
  const auto fit = gpd::fit_mle(xs);
  CHECK(fit.converged);
  CHECK(std::abs(fit.params.sigma - 1.0) < 0.05);
  CHECK(std::abs(fit.params.epsilon - 0.3) < 0.05);

  const auto grid = oracle::gpd_grid_mle(xs, 0.8, 1.2, 0.1, 0.5, 0.002);
  CHECK(std::abs(grid.sigma - 1.0) < 0.05);
  CHECK(std::abs(grid.epsilon - 0.3) < 0.05);
  CHECK(std::abs(grid.sigma - fit.params.sigma) < 0.005);
  CHECK(std::abs(grid.epsilon - fit.params.epsilon) < 0.005);

  // Stationarity at the optimum.
  const auto g = gpd::log_likelihood_grad(xs, fit.params);
  CHECK(std::hypot(g.d_sigma, g.d_epsilon) / xs.size() < 1e-6);
}

TEST_CASE("MLE rejects degenerate input") {
  const std::vector<double> one{1.0};
  CHECK_THROWS(gpd::fit_mle(one));
  const std::vector<double> same{1.0, 1.0, 1.0};
  CHECK_THROWS(gpd::fit_mle(same));
}
