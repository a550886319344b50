#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "exdrl/gpd.hpp"
#include "exdrl/quantile_risk.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace risk = exdrl::risk;
using risk::QuantileDistribution;

namespace {

std::vector<double> iota_values(int n) {
  std::vector<double> v(n);
  std::iota(v.begin(), v.end(), 0.0);
  return v;
}

}  // namespace

TEST_CASE("pinball") {
  CHECK(risk::pinball(0.0, 0.3) == 0.0);
  CHECK(risk::pinball(2.0, 0.5) == 1.0);
  CHECK(risk::pinball(-1.0, 0.9) == doctest::Approx(0.1));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5), t(0.001, 0.999);
  for (int i = 0; i < 1000; ++i) {
    const double e = u(rng);
    CHECK(risk::pinball(e, t(rng)) > 0.0);
  }
}

TEST_CASE("distribution needs two values") {
  CHECK_THROWS(QuantileDistribution({1.0}));
  QuantileDistribution q({3.0, 1.0, 2.0});
  CHECK(q.level(1) == doctest::Approx(1.0 / 3.0));
  CHECK(q.values()[0] == 3.0);
  CHECK(q.sorted() == std::vector<double>{1.0, 2.0, 3.0});
}

TEST_CASE("VaR and CVaR hand values") {
  QuantileDistribution q(iota_values(10));
  CHECK(risk::var_alpha(q, 0.9) == 1.0);
  CHECK(risk::cvar_alpha(q, 0.9) == 0.5);
  QuantileDistribution c(std::vector<double>(17, -2.5));
  for (double a : {0.5, 0.9, 0.95, 0.99}) {
    CHECK(risk::var_alpha(c, a) == -2.5);
    CHECK(risk::cvar_alpha(c, a) == -2.5);
  }
  CHECK_THROWS(risk::var_alpha(q, 1.0));
  CHECK_THROWS(risk::cvar_alpha(q, 0.0));
}

TEST_CASE("VaR of normal quantiles") {
  // Normal quantiles at levels n/100; level 0 is replaced by a finite value.
  std::vector<double> v(100);
  v[0] = oracle::norm_inv(0.001);
  for (int n = 1; n < 100; ++n) v[n] = oracle::norm_inv(n / 100.0);
  const double step = v[6] - v[5];
  CHECK(std::abs(risk::var_alpha(v, 0.95) - (-1.645)) <= step);
}

TEST_CASE("risk measures are permutation invariant and monotone in alpha") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> v(64);
    for (auto& x : v) x = nd(rng);
    auto p = v;
    std::shuffle(p.begin(), p.end(), rng);
    for (double a : {0.5, 0.9, 0.95, 0.99}) {
      CHECK(risk::var_alpha(v, a) == risk::var_alpha(p, a));
      CHECK(risk::cvar_alpha(v, a) == doctest::Approx(risk::cvar_alpha(p, a)).epsilon(1e-14));
      CHECK(risk::cvar_alpha(v, a) <= risk::var_alpha(v, a));
    }
    const double alphas[] = {0.5, 0.8, 0.9, 0.95, 0.99};
    for (int i = 0; i + 1 < 5; ++i) {
      CHECK(risk::var_alpha(v, alphas[i]) >= risk::var_alpha(v, alphas[i + 1]));
      CHECK(risk::cvar_alpha(v, alphas[i]) >= risk::cvar_alpha(v, alphas[i + 1]));
    }
  }
}

TEST_CASE("risk weights reproduce the measure") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  std::vector<double> v(100);
  for (auto& x : v) x = nd(rng);
  for (auto spec : {risk::RiskMeasureSpec{risk::RiskKind::var, 0.95}, risk::RiskMeasureSpec{risk::RiskKind::cvar, 0.95},
                    risk::RiskMeasureSpec{risk::RiskKind::cvar, 0.99}}) {
    const auto w = risk::risk_weights(v, spec);
    double dot = 0.0, total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      dot += w[i] * v[i];
      total += w[i];
    }
    CHECK(dot == doctest::Approx(risk::risk_measure(v, spec)).epsilon(1e-14));
    CHECK(total == doctest::Approx(1.0));
  }
}

TEST_CASE("risk measure labels") {
  CHECK(risk::RiskMeasureSpec{risk::RiskKind::var, 0.95}.label() == "VaR95");
  CHECK(risk::RiskMeasureSpec{risk::RiskKind::cvar, 0.99}.label() == "CVaR99");
  const auto p = risk::RiskMeasureSpec::parse("CVaR95");
  CHECK(p.kind == risk::RiskKind::cvar);
  CHECK(p.alpha == doctest::Approx(0.95));
  CHECK(risk::RiskMeasureSpec::parse("VaR@0.975").alpha == doctest::Approx(0.975));
  CHECK_THROWS(risk::RiskMeasureSpec::parse("ES95"));
  CHECK_THROWS(risk::RiskMeasureSpec::parse("VaR150"));
  CHECK_THROWS(risk::RiskMeasureSpec::parse("VaR9x"));
}

TEST_CASE("threshold") {
  QuantileDistribution q(iota_values(100));
  CHECK(risk::threshold(q, 0.95) == 5.0);
  CHECK(risk::threshold(q, 1.0 - 1e-6) == 0.0);
  CHECK(risk::threshold(std::vector<double>(10, 4.0), 0.9) == 4.0);
}

TEST_CASE("two-part loss hand values") {
  const std::vector<double> zero_pred(5, 0.0), z0{0.0};
  std::vector<double> g0(5, 1.0);
  CHECK(risk::qr_loss_two_part(zero_pred, z0, z0, g0) == 0.0);
  // Every residual is a tie, so zero is a subgradient at every level.
  CHECK(g0 == std::vector<double>(5, 0.0));

  // Single level tau_0 = 0.
  const std::vector<double> pred{1.0}, zb{3.0}, zt{-1.0};
  std::vector<double> g(1);
  CHECK(risk::qr_loss_two_part(pred, zb, zt, g) == 2.0);
  CHECK(g[0] == 1.0);

  // Empty body only counts the tail term.
  CHECK(risk::qr_loss_two_part(pred, {}, zt) == 2.0);
}

TEST_CASE("two-part gradient matches finite differences") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  std::vector<double> theta(20), zb(95), zt(5);
  for (auto& x : theta) x = nd(rng);
  for (auto& x : zb) x = nd(rng);
  for (auto& x : zt) x = nd(rng) - 2.0;
  std::vector<double> g(theta.size());
  risk::qr_loss_two_part(theta, zb, zt, g);
  for (std::size_t n = 0; n < theta.size(); ++n) {
    auto tp = theta, tm = theta;
    const double h = 1e-7;
    tp[n] += h;
    tm[n] -= h;
    const double fd = (risk::qr_loss_two_part(tp, zb, zt) - risk::qr_loss_two_part(tm, zb, zt)) / (2 * h);
    CHECK(g[n] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("two-part loss reduces to plain QR with an empty tail") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<double> theta(10), targets(10);
  for (auto& x : theta) x = nd(rng);
  for (auto& x : targets) x = nd(rng);
  double plain = 0.0;
  for (std::size_t n = 0; n < theta.size(); ++n) {
    for (double z : targets) plain += risk::pinball(z - theta[n], n / 10.0) / 10.0;
  }
  CHECK(risk::qr_loss_two_part(theta, targets, {}) == doctest::Approx(plain).epsilon(1e-14));
}

TEST_CASE("mass-proportional weighting equals pooling") {
  const double beta = 0.95;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  std::vector<double> theta(10), zb(95), zt(5);
  for (auto& x : theta) x = nd(rng);
  for (auto& x : zb) x = nd(rng);
  for (auto& x : zt) x = nd(rng) - 3;
  std::vector<double> pooled(zb);
  pooled.insert(pooled.end(), zt.begin(), zt.end());
  CHECK(risk::qr_loss_two_part(theta, zb, zt, {}, risk::TwoPartWeights::mass_proportional(beta)) ==
        doctest::Approx(risk::qr_loss_two_part(theta, pooled, {})).epsilon(1e-12));
}

TEST_CASE("gradient descent on the two-part loss reaches the grid-search minimiser") {
  // Fixed synthetic target: 95 normal body draws, 5 shifted GPD tail draws.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  std::vector<double> zb(95);
  for (auto& x : zb) x = 1.0 + 0.5 * nd(rng);
  auto tail = exdrl::gpd::sample(rng, {0.3, 0.3}, 5);
  std::vector<double> zt;
  for (double x : tail) zt.push_back(0.2 - x);

  const std::size_t n_levels = 100;
  std::vector<double> theta(n_levels, 0.0), g(n_levels);
  const int iterations = 20000;
  for (int it = 0; it < iterations; ++it) {
    // Linearly decaying step so the subgradient iterates settle at a kink.
    const double step = 0.05 * (1.0 - static_cast<double>(it) / iterations) + 1e-4;
    risk::qr_loss_two_part(theta, zb, zt, g);
    for (std::size_t n = 0; n < n_levels; ++n) theta[n] -= step * g[n];
  }

  // Brute-force minimiser over a value grid, one level at a time.
  std::vector<double> grid;
  for (double v = -4.0; v <= 4.0; v += 0.001) grid.push_back(v);
  for (std::size_t n = 1; n < n_levels; ++n) {
    const double tau = static_cast<double>(n) / n_levels;
    double best = 1e300;
    double best_lo = 0.0, best_hi = 0.0;
    for (double v : grid) {
      double loss = 0.0;
      for (double z : zb) loss += risk::pinball(z - v, tau) / zb.size();
      for (double z : zt) loss += risk::pinball(z - v, tau) / zt.size();
      if (loss < best - 1e-12) {
        best = loss;
        best_lo = best_hi = v;
      } else if (loss <= best + 1e-12) {
        best_hi = v;
      }
    }
    CAPTURE(n);
    CHECK(oracle::distance_to_interval(theta[n], {best_lo - 0.001, best_hi + 0.001}) < 0.01);
  }
  // Level 0 is minimised by anything at or below the smallest sample.
  const double z_min = std::min(*std::min_element(zb.begin(), zb.end()), *std::min_element(zt.begin(), zt.end()));
  CHECK(theta[0] <= z_min + 0.01);
}
