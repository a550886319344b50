#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace exdrl::market {

/// Simulation parameters. Time is counted in whole days; one step is one day.
struct MarketParams {
  double s0 = 10.0;
  double vol = 0.3;
  double mu = 0.0;  // real-world drift of the asset
  double r = 0.0;
  double q = 0.0;
  double days_per_year = 365.0;
  int horizon = 30;
  double poisson_intensity = 1.0;  // client orders per day
  int client_maturity_days = 60;
  int hedge_maturity_days = 30;
  double contract_multiplier = 100.0;
  double kappa = 0.01;

  double dt() const { return 1.0 / days_per_year; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

double norm_cdf(double x);
double norm_pdf(double x);

/// Black-Scholes-Merton European call. At ttm <= 0 the value is intrinsic.
double bsm_price(double s, double k, double r, double q, double vol, double ttm);
double bsm_delta(double s, double k, double r, double q, double vol, double ttm);
double bsm_gamma(double s, double k, double r, double q, double vol, double ttm);

/// Exact lognormal step s * exp((drift - vol^2/2) dt + vol sqrt(dt) z).
double gbm_step(double s, double drift, double vol, double dt, double z);

/// Number of client orders arriving in dt_days days.
int poisson_arrivals(std::mt19937_64& rng, double intensity, double dt_days = 1.0);

/// Direction of each of n client orders: +1 (long) or -1 (short), each with
/// probability one half.
std::vector<int> order_sides(std::mt19937_64& rng, int n);

struct OptionContract {
  double strike = 0.0;
  int maturity_step = 0;
  double position = 0.0;  // signed units of the underlying
  bool is_hedge = false;
};

struct PortfolioState {
  double asset_position = 0.0;
  double cash = 0.0;
  std::vector<OptionContract> options;
};

/// (asset price, portfolio gamma, gamma of one unit of the ATM hedge option).
using Observation = std::array<double, 3>;

/// Everything recorded about one step. The value_* fields are portfolio
/// market values at successive stages of the step and support the
/// cash-flow audit.
struct StepRecord {
  int step = 0;
  double price = 0.0;          // price at which hedging took place
  double action = 0.0;
  double gamma_pre = 0.0;
  double gamma_post = 0.0;     // (1 - a) * gamma_pre by construction
  double gamma_after_hedge = 0.0;  // recomputed from the book after the trade
  double hedge_units = 0.0;    // H, in units of the underlying
  double hedge_contracts = 0.0;  // H / multiplier
  double hedge_value = 0.0;    // V, value of one unit of the hedge option
  double cost = 0.0;           // kappa |V H|
  double delta_rebalance = 0.0;  // asset units traded
  double delta_after_rebalance = 0.0;
  double value_start = 0.0;
  double value_after_trades = 0.0;
  double value_after_move = 0.0;
  double value_end = 0.0;
  double next_price = 0.0;
  int arrivals = 0;
  double reward = 0.0;
  double cumulative_pnl = 0.0;
};

struct StepResult {
  Observation observation{};
  double reward = 0.0;
  bool done = false;
  StepRecord record;
};

class HedgingEnv {
 public:
  explicit HedgingEnv(MarketParams params);

  /// Starts a new episode at s0 with an empty book, then admits the
  /// client orders that arrive on day 0.
  Observation reset(std::uint64_t seed);
  /// Like reset, without initial arrivals.
  Observation reset_empty(std::uint64_t seed);

  /// Hedges a fraction a of the portfolio gamma, rebalances delta to zero,
  /// advances one day, settles expiries and admits new orders. Actions
  /// outside [0, 1] are clamped and counted.
  StepResult step(double action);

  /// Adds a contract traded at fair value (no change in portfolio value).
  void add_option(const OptionContract& option);

  Observation observe() const;
  double price() const { return price_; }
  int step_index() const { return step_; }
  bool done() const { return step_ >= params_.horizon; }
  const MarketParams& params() const { return params_; }
  const PortfolioState& portfolio() const { return book_; }
  const std::vector<StepRecord>& log() const { return log_; }
  std::int64_t clamped_actions() const { return clamped_; }

  double portfolio_value() const;
  double portfolio_delta() const;
  double portfolio_gamma() const;
  /// Gamma of one unit of a fresh ATM option with the hedge maturity.
  double hedge_option_gamma() const;

 private:
  double ttm(int maturity_step) const;
  double option_value(const OptionContract& o) const;
  void settle_expired();
  void admit_orders();

  MarketParams params_;
  std::mt19937_64 rng_;
  double price_ = 0.0;
  int step_ = 0;
  double cumulative_ = 0.0;
  std::int64_t clamped_ = 0;
  PortfolioState book_;
  std::vector<StepRecord> log_;
};

/// 1 - sum_t sign(pre_t) post_t / sum_t |pre_t|. Empty when every pre_t is 0.
std::optional<double> gamma_hedge_ratio(std::span<const double> gamma_pre, std::span<const double> gamma_post);
std::optional<double> gamma_hedge_ratio(std::span<const StepRecord> records);

/// Episode log with columns step, price, gamma_pre, gamma_post,
/// hedge_contracts, delta_rebalance, reward, cumulative_pnl.
void write_episode_csv(std::ostream& out, std::span<const StepRecord> records);

}  // namespace exdrl::market
