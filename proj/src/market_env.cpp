#include "exdrl/market_env.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace exdrl::market {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("market.") + field + ": " + what);
}

struct D12 {
  double d1;
  double d2;
};

D12 d_terms(double s, double k, double r, double q, double vol, double ttm) {
  const double sq = vol * std::sqrt(ttm);
  const double d1 = (std::log(s / k) + (r - q + 0.5 * vol * vol) * ttm) / sq;
  return {d1, d1 - sq};
}

void check_inputs(double s, double k, double vol) {
  if (!(s > 0.0) || !(k > 0.0) || !(vol > 0.0)) {
    throw std::domain_error("bsm: spot, strike and volatility must be positive");
  }
}

}  // namespace

void MarketParams::validate() const {
  require(s0 > 0.0 && std::isfinite(s0), "s0", "must be positive");
  require(vol > 0.0 && std::isfinite(vol), "vol", "must be positive");
  require(std::isfinite(mu), "mu", "must be finite");
  require(std::isfinite(r), "r", "must be finite");
  require(std::isfinite(q), "q", "must be finite");
  require(days_per_year > 0.0, "days_per_year", "must be positive");
  require(horizon >= 1, "horizon", "must be >= 1");
  require(poisson_intensity >= 0.0 && std::isfinite(poisson_intensity), "poisson_intensity", "must be >= 0");
  require(client_maturity_days >= 1, "client_maturity_days", "must be >= 1");
  require(hedge_maturity_days >= 1, "hedge_maturity_days", "must be >= 1");
  require(contract_multiplier > 0.0, "contract_multiplier", "must be positive");
  require(kappa >= 0.0 && kappa < 1.0, "kappa", "must lie in [0, 1)");
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) { return std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2); }

double bsm_price(double s, double k, double r, double q, double vol, double ttm) {
  check_inputs(s, k, vol);
  if (ttm <= 0.0) return std::max(s - k, 0.0);
  const auto [d1, d2] = d_terms(s, k, r, q, vol, ttm);
  return s * std::exp(-q * ttm) * norm_cdf(d1) - k * std::exp(-r * ttm) * norm_cdf(d2);
}

double bsm_delta(double s, double k, double r, double q, double vol, double ttm) {
  check_inputs(s, k, vol);
  if (ttm <= 0.0) return s > k ? 1.0 : 0.0;
  return std::exp(-q * ttm) * norm_cdf(d_terms(s, k, r, q, vol, ttm).d1);
}

double bsm_gamma(double s, double k, double r, double q, double vol, double ttm) {
  check_inputs(s, k, vol);
  if (ttm <= 0.0) return 0.0;
  const double d1 = d_terms(s, k, r, q, vol, ttm).d1;
  return std::exp(-q * ttm) * norm_pdf(d1) / (s * vol * std::sqrt(ttm));
}

double gbm_step(double s, double drift, double vol, double dt, double z) {
  return s * std::exp((drift - 0.5 * vol * vol) * dt + vol * std::sqrt(dt) * z);
}

int poisson_arrivals(std::mt19937_64& rng, double intensity, double dt_days) {
  if (!(intensity >= 0.0)) throw std::invalid_argument("poisson_arrivals: intensity must be >= 0");
  const double mean = intensity * dt_days;
  if (mean == 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

std::vector<int> order_sides(std::mt19937_64& rng, int n) {
  std::bernoulli_distribution coin(0.5);
  std::vector<int> sides(static_cast<std::size_t>(std::max(n, 0)));
  for (auto& s : sides) s = coin(rng) ? 1 : -1;
  return sides;
}

HedgingEnv::HedgingEnv(MarketParams params) : params_(params) {
  params_.validate();
  price_ = params_.s0;
}

Observation HedgingEnv::reset_empty(std::uint64_t seed) {
  rng_.seed(seed);
  price_ = params_.s0;
  step_ = 0;
  cumulative_ = 0.0;
  book_ = PortfolioState{};
  log_.clear();
  return observe();
}

Observation HedgingEnv::reset(std::uint64_t seed) {
  reset_empty(seed);
  admit_orders();
  return observe();
}

double HedgingEnv::ttm(int maturity_step) const {
  return static_cast<double>(maturity_step - step_) / params_.days_per_year;
}

double HedgingEnv::option_value(const OptionContract& o) const {
  return bsm_price(price_, o.strike, params_.r, params_.q, params_.vol, ttm(o.maturity_step));
}

double HedgingEnv::portfolio_value() const {
  double v = book_.cash + book_.asset_position * price_;
  for (const auto& o : book_.options) v += o.position * option_value(o);
  return v;
}

double HedgingEnv::portfolio_delta() const {
  double d = book_.asset_position;
  for (const auto& o : book_.options) {
    d += o.position * bsm_delta(price_, o.strike, params_.r, params_.q, params_.vol, ttm(o.maturity_step));
  }
  return d;
}

double HedgingEnv::portfolio_gamma() const {
  double g = 0.0;
  for (const auto& o : book_.options) {
    g += o.position * bsm_gamma(price_, o.strike, params_.r, params_.q, params_.vol, ttm(o.maturity_step));
  }
  return g;
}

double HedgingEnv::hedge_option_gamma() const {
  return bsm_gamma(price_, price_, params_.r, params_.q, params_.vol,
                   static_cast<double>(params_.hedge_maturity_days) / params_.days_per_year);
}

Observation HedgingEnv::observe() const { return {price_, portfolio_gamma(), hedge_option_gamma()}; }

void HedgingEnv::add_option(const OptionContract& option) {
  if (!(option.strike > 0.0)) throw std::invalid_argument("add_option: strike must be positive");
  if (option.maturity_step <= step_) throw std::invalid_argument("add_option: maturity must lie after the current step");
  book_.cash -= option.position * option_value(option);
  book_.options.push_back(option);
}

void HedgingEnv::settle_expired() {
  auto expired = [&](const OptionContract& o) { return o.maturity_step <= step_; };
  for (const auto& o : book_.options) {
    if (expired(o)) book_.cash += o.position * std::max(price_ - o.strike, 0.0);
  }
  std::erase_if(book_.options, expired);
}

void HedgingEnv::admit_orders() {
  const int n = poisson_arrivals(rng_, params_.poisson_intensity);
  for (int side : order_sides(rng_, n)) {
    add_option({price_, step_ + params_.client_maturity_days, side * params_.contract_multiplier, false});
  }
  if (!log_.empty()) log_.back().arrivals = n;
}

StepResult HedgingEnv::step(double action) {
  if (done()) throw std::logic_error("HedgingEnv::step: episode is over; call reset()");
  if (!(action >= 0.0 && action <= 1.0)) {
    const double clamped = std::isnan(action) ? 0.0 : std::clamp(action, 0.0, 1.0);
    if (clamped_++ == 0) std::clog << "warning: action " << action << " clamped to " << clamped << '\n';
    action = clamped;
  }

  StepRecord rec;
  rec.step = step_;
  rec.price = price_;
  rec.action = action;
  rec.value_start = portfolio_value();

  // Gamma hedge with a fresh ATM option.
  rec.gamma_pre = portfolio_gamma();
  const double unit_gamma = hedge_option_gamma();
  rec.hedge_value = bsm_price(price_, price_, params_.r, params_.q, params_.vol,
                              static_cast<double>(params_.hedge_maturity_days) / params_.days_per_year);
  rec.hedge_units = -action * rec.gamma_pre / unit_gamma;
  rec.hedge_contracts = rec.hedge_units / params_.contract_multiplier;
  rec.gamma_post = (1.0 - action) * rec.gamma_pre;
  if (rec.hedge_units != 0.0) {
    add_option({price_, step_ + params_.hedge_maturity_days, rec.hedge_units, true});
    rec.cost = params_.kappa * std::abs(rec.hedge_value * rec.hedge_units);
    book_.cash -= rec.cost;
  }
  rec.gamma_after_hedge = portfolio_gamma();

  // Cost-free delta rebalance to zero.
  rec.delta_rebalance = -portfolio_delta();
  book_.asset_position += rec.delta_rebalance;
  book_.cash -= rec.delta_rebalance * price_;
  rec.delta_after_rebalance = portfolio_delta();
  rec.value_after_trades = portfolio_value();

  std::normal_distribution<double> normal;
  price_ = gbm_step(price_, params_.mu, params_.vol, params_.dt(), normal(rng_));
  ++step_;
  rec.next_price = price_;
  rec.value_after_move = portfolio_value();

  settle_expired();
  log_.push_back(rec);
  admit_orders();

  StepRecord& out = log_.back();
  out.value_end = portfolio_value();
  out.reward = out.value_end - out.value_start;
  cumulative_ += out.reward;
  out.cumulative_pnl = cumulative_;

  StepResult result;
  result.observation = observe();
  result.reward = out.reward;
  result.done = done();
  result.record = out;
  return result;
}

std::optional<double> gamma_hedge_ratio(std::span<const double> gamma_pre, std::span<const double> gamma_post) {
  if (gamma_pre.size() != gamma_post.size()) throw std::invalid_argument("gamma_hedge_ratio: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < gamma_pre.size(); ++t) {
    if (gamma_pre[t] == 0.0) continue;
    const double sign = gamma_pre[t] > 0.0 ? 1.0 : -1.0;
    num += sign * gamma_post[t];
    den += std::abs(gamma_pre[t]);
  }
  if (den == 0.0) return std::nullopt;
  return 1.0 - num / den;
}

std::optional<double> gamma_hedge_ratio(std::span<const StepRecord> records) {
  std::vector<double> pre, post;
  for (const auto& r : records) {
    pre.push_back(r.gamma_pre);
    post.push_back(r.gamma_post);
  }
  return gamma_hedge_ratio(pre, post);
}

void write_episode_csv(std::ostream& out, std::span<const StepRecord> records) {
  out << "step,price,gamma_pre,gamma_post,hedge_contracts,delta_rebalance,reward,cumulative_pnl\n";
  out << std::setprecision(10);
  for (const auto& r : records) {
    out << r.step << ',' << r.price << ',' << r.gamma_pre << ',' << r.gamma_post << ',' << r.hedge_contracts << ','
        << r.delta_rebalance << ',' << r.reward << ',' << r.cumulative_pnl << '\n';
  }
}

}  // namespace exdrl::market
