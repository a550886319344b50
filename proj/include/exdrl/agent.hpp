#pragma once

#include "exdrl/gpd.hpp"
#include "exdrl/market_env.hpp"
#include "exdrl/mlp.hpp"
#include "exdrl/quantile_risk.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace exdrl::agent {

using market::Observation;
inline constexpr int kStateSize = 3;

struct AgentConfig {
  int n_quantiles = 100;
  int m_tail = 5;
  double beta = 0.95;
  risk::RiskMeasureSpec risk_measure{risk::RiskKind::cvar, 0.95};
  double critic_lr = 1e-4;
  double actor_lr = 1e-5;
  double tail_lr = 1e-4;
  std::size_t replay_capacity = 100'000;
  std::size_t batch_size = 64;
  std::vector<int> hidden{64, 64, 64};
  int target_sync_period = 1;
  double exploration_std = 0.1;
  double exploration_std_final = 0.01;
  std::int64_t exploration_anneal_steps = 10'000;
  double gamma = 1.0;
  bool baseline_mode = false;
  /// Weight body and tail averages by beta and 1 - beta instead of equally.
  bool mass_proportional_weights = false;

  /// round(m_tail * beta / (1 - beta)).
  int m_body() const;
  /// round((1 - beta) * N); also the sorted index of the threshold.
  int n_tail() const;
  int n_body() const { return n_quantiles - n_tail(); }
  risk::TwoPartWeights loss_weights() const;
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Transition {
  Observation s{};
  double a = 0.0;
  double r = 0.0;
  Observation s_next{};
  double a_next = 0.0;  // behaviour action at s_next when collected
  bool done = false;
};

/// Running per-feature mean and variance (Welford) used to standardise
/// observations before they enter any network.
class RunningNormalizer {
 public:
  void update(const Observation& s);
  Eigen::VectorXd standardize(const Observation& s) const;

  std::int64_t count() const { return count_; }
  const Observation& mean() const { return mean_; }
  const Observation& m2() const { return m2_; }
  void restore(std::int64_t count, const Observation& mean, const Observation& m2);

 private:
  std::int64_t count_ = 0;
  Observation mean_{};
  Observation m2_{};
};

/// Fixed-capacity ring of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void add(const Transition& t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_.at(i); }
  /// k indices drawn uniformly with replacement.
  std::vector<Transition> sample(std::mt19937_64& rng, std::size_t k) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> items_;
};

/// Samples of the target distribution for one transition.
struct TargetSamples {
  std::vector<double> body;
  std::vector<double> tail;
  double threshold = 0.0;  // u at (s', a'); 0 for terminal transitions
};

/// Quantile critic seen by the policy gradient. States are standardised
/// feature columns.
class QuantileCritic {
 public:
  virtual ~QuantileCritic() = default;
  /// N x B quantiles at (states_b, actions_b).
  virtual Eigen::MatrixXd quantiles(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions) const = 0;
  /// d/da_b of sum_n upstream(n, b) * quantile_n(s_b, a_b).
  virtual Eigen::RowVectorXd action_gradient(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions,
                                             const Eigen::MatrixXd& upstream) const = 0;
};

/// Network critic with input rows (standardised state, action).
class MlpCritic final : public QuantileCritic {
 public:
  explicit MlpCritic(const nn::Mlp& net) : net_(net) {}
  Eigen::MatrixXd quantiles(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions) const override;
  Eigen::RowVectorXd action_gradient(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions,
                                     const Eigen::MatrixXd& upstream) const override;

 private:
  const nn::Mlp& net_;
};

Eigen::MatrixXd stack_inputs(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions);

struct ActorGradient {
  double objective = 0.0;  // batch mean of the risk measure
  nn::ParamSet params;     // gradient of the objective
};

/// Gradient of the batch-mean risk measure of the critic at (s, actor(s))
/// with respect to the actor parameters.
ActorGradient actor_gradient(const nn::Mlp& actor, const QuantileCritic& critic, const Eigen::MatrixXd& states,
                             const risk::RiskMeasureSpec& spec);

struct TailGradient {
  bool usable = false;
  std::vector<double> exceedances;  // u - theta for sorted theta below u
  gpd::GpdParams params;            // head output
  double log_likelihood = 0.0;      // mean over exceedances
  nn::ParamSet grad;                // gradient of the mean log-likelihood
};

/// Mean GPD log-likelihood of the exceedances u - theta over the n_tail
/// smallest critic quantiles that lie strictly below u, and its gradient
/// through the head. Unusable when fewer than two exceedances exist.
TailGradient tail_gradient(const nn::Mlp& head, const Eigen::VectorXd& head_input, std::span<const double> quantiles,
                           double u, int n_tail);

struct CriticGradient {
  double loss = 0.0;  // batch mean of the two-part loss
  nn::ParamSet params;
};

struct AgentNets {
  nn::Mlp critic;
  nn::Mlp target_critic;
  nn::Mlp actor;
  nn::Mlp tail_head;  // outputs (sigma > 0, epsilon in (0, 1))
};

struct AgentOptimizers {
  nn::Adam critic;
  nn::Adam actor;
  nn::Adam tail;
};

/// Network specs implied by a configuration.
nn::MlpSpec critic_spec(const AgentConfig& cfg);
nn::MlpSpec actor_spec(const AgentConfig& cfg);
nn::MlpSpec tail_spec(const AgentConfig& cfg);

class Agent {
 public:
  Agent(AgentConfig cfg, std::uint64_t seed);

  const AgentConfig& config() const { return cfg_; }
  AgentNets& nets() { return nets_; }
  const AgentNets& nets() const { return nets_; }
  AgentOptimizers& optimizers() { return opt_; }
  const AgentOptimizers& optimizers() const { return opt_; }
  RunningNormalizer& normalizer() { return norm_; }
  const RunningNormalizer& normalizer() const { return norm_; }
  std::int64_t updates() const { return updates_; }
  void set_updates(std::int64_t n) { updates_ = n; }

  Eigen::VectorXd standardize(const Observation& s) const { return norm_.standardize(s); }
  Eigen::MatrixXd standardize(std::span<const Observation> states) const;

  /// Deterministic policy.
  double act(const Observation& s) const;
  Eigen::VectorXd quantiles(const Observation& s, double a) const;
  Eigen::VectorXd target_quantiles(const Observation& s, double a) const;
  gpd::GpdParams tail_params(const Observation& s, double a) const;

  TargetSamples sample_target(const Transition& tr, std::mt19937_64& rng) const;
  CriticGradient critic_gradient(std::span<const Transition> batch, std::span<const TargetSamples> targets) const;
  /// One descent step; throws std::runtime_error without updating on a
  /// non-finite loss. Returns the loss before the step.
  double critic_update(std::span<const Transition> batch, std::span<const TargetSamples> targets);
  double critic_update(std::span<const Transition> batch, std::mt19937_64& rng);
  /// One ascent step on the risk measure. Returns the objective before it.
  double actor_update(std::span<const Observation> states);
  /// One ascent step of the GPD head at (s, actor(s)); empty when skipped.
  std::optional<gpd::GpdParams> tail_update(const Observation& s);
  void target_sync();
  /// Counts one completed learning iteration and syncs the target when due.
  void finish_iteration();

 private:
  AgentConfig cfg_;
  AgentNets nets_;
  AgentOptimizers opt_;
  RunningNormalizer norm_;
  std::int64_t updates_ = 0;
};

struct TrainMetrics {
  std::int64_t step = 0;
  double reward = 0.0;
  bool learned = false;  // false while the buffer holds fewer than batch_size items
  double qr_loss = 0.0;
  double actor_objective = 0.0;
  double gpd_sigma_mean = 0.0;
  double gpd_eps_mean = 0.0;
  std::int64_t tail_update_skips = 0;
};

/// Collects one transition per call and runs one learning iteration:
/// critic, actor, tail head, target sync.
class Trainer {
 public:
  Trainer(AgentConfig cfg, market::MarketParams market, std::uint64_t seed);

  TrainMetrics train_step();
  double exploration_std() const;

  Agent& agent() { return agent_; }
  const Agent& agent() const { return agent_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  std::int64_t steps() const { return step_; }

 private:
  Agent agent_;
  market::HedgingEnv env_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  Observation obs_{};
  bool need_reset_ = true;
  std::int64_t step_ = 0;
  std::int64_t skips_ = 0;
};

/// Seed for stream `stream` derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace exdrl::agent
