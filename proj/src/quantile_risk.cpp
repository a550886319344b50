#include "exdrl/quantile_risk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace exdrl::risk {

namespace {

void check_probability(double p, const char* name) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in (0, 1), got " + std::to_string(p));
  }
}

std::vector<std::size_t> sorted_order(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return idx;
}

std::vector<double> sorted_copy(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("risk: empty value set");
  std::vector<double> out(values.begin(), values.end());
  std::sort(out.begin(), out.end());
  return out;
}

void accumulate_pinball(std::span<const double> theta, std::span<const double> z, double scale, double& loss,
                        std::span<double> grad) {
  if (z.empty()) return;
  const std::size_t n_levels = theta.size();
  const double w = scale / static_cast<double>(z.size());
  for (std::size_t n = 0; n < n_levels; ++n) {
    const double tau = static_cast<double>(n) / static_cast<double>(n_levels);
    const double th = theta[n];
    double sum = 0.0;
    double below = 0.0;
    double ties = 0.0;
    for (double zz : z) {
      const double e = zz - th;
      sum += pinball(e, tau);
      if (e < 0.0) below += 1.0;
      if (e == 0.0) ties += 1.0;
    }
    loss += w * sum;
    if (!grad.empty()) {
      // d/dtheta rho_tau(z - theta) = -(tau - 1{z < theta}) away from ties.
      // At ties the slope spans [left, right]; take its minimum-norm element.
      const double left = below - tau * static_cast<double>(z.size());
      const double right = left + ties;
      grad[n] += w * (left > 0.0 ? left : (right < 0.0 ? right : 0.0));
    }
  }
}

}  // namespace

QuantileDistribution::QuantileDistribution(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) throw std::invalid_argument("QuantileDistribution needs at least two values");
}

std::vector<double> QuantileDistribution::sorted() const { return sorted_copy(values_); }

void RiskMeasureSpec::validate() const { check_probability(alpha, "alpha"); }

std::string RiskMeasureSpec::label() const {
  const long pct = std::lround(alpha * 100.0);
  std::string out = kind == RiskKind::var ? "VaR" : "CVaR";
  if (std::abs(alpha * 100.0 - static_cast<double>(pct)) < 1e-9) return out + std::to_string(pct);
  return out + "@" + std::to_string(alpha);
}

RiskMeasureSpec RiskMeasureSpec::parse(const std::string& text) {
  RiskMeasureSpec spec;
  std::string rest;
  if (text.rfind("CVaR", 0) == 0) {
    spec.kind = RiskKind::cvar;
    rest = text.substr(4);
  } else if (text.rfind("VaR", 0) == 0) {
    spec.kind = RiskKind::var;
    rest = text.substr(3);
  } else {
    throw std::invalid_argument("risk measure must start with VaR or CVaR: '" + text + "'");
  }
  try {
    std::size_t used = 0;
    if (!rest.empty() && rest.front() == '@') {
      spec.alpha = std::stod(rest.substr(1), &used);
      ++used;
    } else {
      spec.alpha = std::stod(rest, &used) / 100.0;
    }
    if (used != rest.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse risk level in '" + text + "'");
  }
  spec.validate();
  return spec;
}

std::size_t level_index(double p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("level_index: empty set");
  const double raw = std::round(p * static_cast<double>(n));
  if (raw <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(raw), n - 1);
}

double var_alpha(std::span<const double> values, double alpha) {
  check_probability(alpha, "alpha");
  const auto s = sorted_copy(values);
  return s[level_index(1.0 - alpha, s.size())];
}

double var_alpha(const QuantileDistribution& q, double alpha) { return var_alpha(q.values(), alpha); }

double cvar_alpha(std::span<const double> values, double alpha) {
  check_probability(alpha, "alpha");
  const auto s = sorted_copy(values);
  const std::size_t k = level_index(1.0 - alpha, s.size());
  return std::accumulate(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k) + 1, 0.0) / static_cast<double>(k + 1);
}

double cvar_alpha(const QuantileDistribution& q, double alpha) { return cvar_alpha(q.values(), alpha); }

double threshold(std::span<const double> values, double beta) {
  check_probability(beta, "beta");
  const auto s = sorted_copy(values);
  return s[level_index(1.0 - beta, s.size())];
}

double threshold(const QuantileDistribution& q, double beta) { return threshold(q.values(), beta); }

double risk_measure(std::span<const double> values, const RiskMeasureSpec& spec) {
  return spec.kind == RiskKind::var ? var_alpha(values, spec.alpha) : cvar_alpha(values, spec.alpha);
}

std::vector<double> risk_weights(std::span<const double> values, const RiskMeasureSpec& spec) {
  spec.validate();
  if (values.empty()) throw std::invalid_argument("risk_weights: empty value set");
  const auto order = sorted_order(values);
  const std::size_t k = level_index(1.0 - spec.alpha, values.size());
  std::vector<double> w(values.size(), 0.0);
  if (spec.kind == RiskKind::var) {
    w[order[k]] = 1.0;
  } else {
    for (std::size_t i = 0; i <= k; ++i) w[order[i]] = 1.0 / static_cast<double>(k + 1);
  }
  return w;
}

double qr_loss_two_part(std::span<const double> theta, std::span<const double> z_body,
                        std::span<const double> z_tail, std::span<double> grad, TwoPartWeights weights) {
  if (theta.empty()) throw std::invalid_argument("qr_loss_two_part: no quantiles");
  if (!grad.empty()) {
    if (grad.size() != theta.size()) throw std::invalid_argument("qr_loss_two_part: gradient size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  double loss = 0.0;
  accumulate_pinball(theta, z_body, weights.body, loss, grad);
  accumulate_pinball(theta, z_tail, weights.tail, loss, grad);
  return loss;
}

}  // namespace exdrl::risk
