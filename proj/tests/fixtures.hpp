// Agent fixtures shared by the unit tests and the acceptance binary.
#pragma once

#include "exdrl/agent.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace fixture {

namespace ag = exdrl::agent;

/// Last-layer bias block of a network, which sets the outputs directly
/// when every weight is zero.
inline Eigen::Map<Eigen::VectorXd> output_bias(exdrl::nn::Mlp& net) {
  const auto n = static_cast<Eigen::Index>(net.spec().outputs());
  return {net.params().data() + net.params().size() - n, n};
}

inline ag::Transition sample_transition() {
  ag::Transition t;
  t.s = {10.0, -20.0, 0.46};
  t.a = 0.4;
  t.r = 0.3;
  t.s_next = {10.1, -15.0, 0.45};
  return t;
}

struct QrConvergence {
  std::vector<double> learned;          // critic quantiles after training
  std::vector<double> oracle_distance;  // distance to the minimiser interval per level
  double max_distance = 0.0;
};

/// Trains the critic against a fixed pool of target samples drawn once
/// from frozen target nets at a single state-action pair, then compares
/// every quantile with the minimiser interval of the pooled two-part
/// objective. In baseline mode the pool is the plain quantile-regression
/// target set.
inline QrConvergence qr_convergence(int steps, std::uint64_t seed, bool baseline = false) {
  ag::AgentConfig cfg;
  cfg.critic_lr = 1e-3;
  cfg.baseline_mode = baseline;
  ag::Agent agent(cfg, seed);
  std::mt19937_64 rng(seed + 1);

  const std::size_t batch_size = 16;
  const std::vector<ag::Transition> batch(batch_size, sample_transition());
  std::vector<ag::TargetSamples> targets;
  for (const auto& t : batch) targets.push_back(agent.sample_target(t, rng));

  for (int i = 0; i < steps; ++i) {
    // Linear decay lets Adam settle on the piecewise-linear objective.
    const double frac = static_cast<double>(i) / steps;
    agent.optimizers().critic.set_learning_rate(1e-3 * (1.0 - frac) + 1e-5);
    agent.critic_update(batch, targets);
  }

  const auto w = cfg.loss_weights();
  std::vector<std::pair<double, double>> pool;
  for (const auto& t : targets) {
    for (double z : t.body) pool.emplace_back(z, w.body / (batch_size * t.body.size()));
    for (double z : t.tail) pool.emplace_back(z, w.tail / (batch_size * t.tail.size()));
  }
  QrConvergence out;
  const Eigen::VectorXd theta = agent.quantiles(batch[0].s, batch[0].a);
  for (int n = 0; n < cfg.n_quantiles; ++n) {
    const double tau = static_cast<double>(n) / cfg.n_quantiles;
    const double d = oracle::distance_to_interval(theta(n), oracle::weighted_pinball_argmin(pool, tau));
    out.learned.push_back(theta(n));
    out.oracle_distance.push_back(d);
    out.max_distance = std::max(out.max_distance, d);
  }
  return out;
}

/// Quantiles -(a - 0.7)^2 + offset_n, maximised by a = 0.7 for every
/// risk measure.
class ToyCritic final : public ag::QuantileCritic {
 public:
  explicit ToyCritic(int n) : n_(n) {}
  Eigen::MatrixXd quantiles(const Eigen::MatrixXd&, const Eigen::RowVectorXd& a) const override {
    Eigen::MatrixXd q(n_, a.size());
    for (Eigen::Index b = 0; b < a.size(); ++b) {
      for (int i = 0; i < n_; ++i) q(i, b) = -(a(b) - 0.7) * (a(b) - 0.7) + (i - n_ / 2.0) / n_;
    }
    return q;
  }
  Eigen::RowVectorXd action_gradient(const Eigen::MatrixXd&, const Eigen::RowVectorXd& a,
                                     const Eigen::MatrixXd& up) const override {
    Eigen::RowVectorXd g(a.size());
    for (Eigen::Index b = 0; b < a.size(); ++b) g(b) = -2.0 * (a(b) - 0.7) * up.col(b).sum();
    return g;
  }

 private:
  int n_;
};

/// Trains a small actor against the toy critic; returns the largest
/// deviation of the final policy from 0.7 over fresh states.
inline double toy_actor_error(const exdrl::risk::RiskMeasureSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  exdrl::nn::Mlp actor(exdrl::nn::MlpSpec::uniform_head(3, {16, 16}, 1, exdrl::nn::OutputHead::unit_interval), rng);
  exdrl::nn::Adam opt(actor.params().size(), exdrl::nn::AdamConfig{1e-2});
  const ToyCritic critic(20);
  std::normal_distribution<double> nd;
  auto states = [&](int n) {
    Eigen::MatrixXd s(3, n);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = nd(rng);
    return s;
  };
  for (int i = 0; i < 2000; ++i) {
    const auto g = ag::actor_gradient(actor, critic, states(32), spec);
    opt.step(actor.params(), -g.params);
  }
  const Eigen::MatrixXd a = actor.forward(states(200));
  return (a.array() - 0.7).abs().maxCoeff();
}

struct TailRecovery {
  exdrl::gpd::GpdParams head;
  oracle::GridFit grid;
  bool skipped = false;
};

/// Critic whose quantiles below the threshold u are exact GPD(1, 0.3)
/// quantiles of u - theta; repeated tail updates at one state.
inline TailRecovery tail_recovery(int steps, std::uint64_t seed) {
  ag::AgentConfig cfg;
  cfg.n_quantiles = 1000;
  cfg.beta = 0.5;
  cfg.hidden = {16, 16};
  cfg.tail_lr = 1e-2;
  ag::Agent agent(cfg, seed);
  const int n_tail = cfg.n_tail();
  const double u = 1.5;
  const exdrl::gpd::GpdParams truth{1.0, 0.3};

  auto& critic = agent.nets().critic;
  critic.params().setZero();
  auto bias = output_bias(critic);
  std::vector<double> x;
  for (int i = 0; i < n_tail; ++i) {
    const double xi = exdrl::gpd::quantile((i + 0.5) / n_tail, truth);
    x.push_back(xi);
    bias(i) = u - xi;
  }
  for (int i = n_tail; i < cfg.n_quantiles; ++i) bias(i) = u + 0.01 * (i - n_tail);
  agent.target_sync();

  const ag::Observation s{10.0, 5.0, 0.46};
  TailRecovery out;
  for (int i = 0; i < steps; ++i) {
    if (!agent.tail_update(s)) {
      out.skipped = true;
      break;
    }
  }
  out.head = agent.tail_params(s, agent.act(s));
  out.grid = oracle::gpd_grid_mle(x, 0.5, 1.5, 0.0, 0.8, 0.01);
  return out;
}

}  // namespace fixture
