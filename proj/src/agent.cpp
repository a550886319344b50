#include "exdrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace exdrl::agent {

namespace {

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw std::invalid_argument(std::string("agent.") + field + ": " + what);
}

Eigen::VectorXd head_input(const Eigen::VectorXd& state, double action) {
  Eigen::VectorXd x(state.size() + 1);
  x << state, action;
  return x;
}

}  // namespace

int AgentConfig::m_body() const {
  return static_cast<int>(std::lround(static_cast<double>(m_tail) * beta / (1.0 - beta)));
}

int AgentConfig::n_tail() const {
  return static_cast<int>(risk::level_index(1.0 - beta, static_cast<std::size_t>(n_quantiles)));
}

risk::TwoPartWeights AgentConfig::loss_weights() const {
  return mass_proportional_weights ? risk::TwoPartWeights::mass_proportional(beta) : risk::TwoPartWeights::equal();
}

void AgentConfig::validate() const {
  require(n_quantiles >= 2, "n_quantiles", "must be >= 2");
  require(m_tail >= 1, "m_tail", "must be >= 1");
  require(beta > 0.0 && beta < 1.0, "beta", "must lie in (0, 1)");
  require(beta * n_quantiles >= 1.0, "beta", "beta * n_quantiles must be >= 1 (empty body level set)");
  require(m_body() >= 1, "m_tail", "m_tail * beta / (1 - beta) must round to >= 1");
  try {
    risk_measure.validate();
  } catch (const std::exception& e) {
    require(false, "risk_measure", e.what());
  }
  require(critic_lr > 0.0, "critic_lr", "must be positive");
  require(actor_lr > 0.0, "actor_lr", "must be positive");
  require(tail_lr > 0.0, "tail_lr", "must be positive");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(replay_capacity >= batch_size, "replay_capacity", "must be >= batch_size");
  require(!hidden.empty(), "hidden", "needs at least one hidden layer");
  for (int h : hidden) require(h >= 1, "hidden", "layer widths must be >= 1");
  require(target_sync_period >= 1, "target_sync_period", "must be >= 1");
  require(exploration_std >= 0.0, "exploration_std", "must be >= 0");
  require(exploration_std_final >= 0.0, "exploration_std_final", "must be >= 0");
  require(exploration_anneal_steps >= 0, "exploration_anneal_steps", "must be >= 0");
  require(gamma > 0.0 && gamma <= 1.0, "gamma", "must lie in (0, 1]");
}

void RunningNormalizer::update(const Observation& s) {
  ++count_;
  for (int i = 0; i < kStateSize; ++i) {
    const double d = s[i] - mean_[i];
    mean_[i] += d / static_cast<double>(count_);
    m2_[i] += d * (s[i] - mean_[i]);
  }
}

Eigen::VectorXd RunningNormalizer::standardize(const Observation& s) const {
  Eigen::VectorXd out(kStateSize);
  for (int i = 0; i < kStateSize; ++i) {
    const double var = count_ >= 2 ? m2_[i] / static_cast<double>(count_ - 1) : 1.0;
    const double centre = count_ >= 1 ? mean_[i] : 0.0;
    out[i] = (s[i] - centre) / std::sqrt(var + 1e-8);
  }
  return out;
}

void RunningNormalizer::restore(std::int64_t count, const Observation& mean, const Observation& m2) {
  if (count < 0) throw std::invalid_argument("RunningNormalizer::restore: negative count");
  count_ = count;
  mean_ = mean;
  m2_ = m2;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
  items_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::add(const Transition& t) {
  if (items_.size() < capacity_) {
    items_.push_back(t);
  } else {
    items_[next_] = t;
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample(std::mt19937_64& rng, std::size_t k) const {
  if (items_.empty()) throw std::logic_error("ReplayBuffer::sample: buffer is empty");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Transition> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

Eigen::MatrixXd stack_inputs(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions) {
  if (states.cols() != actions.cols()) throw std::invalid_argument("stack_inputs: batch size mismatch");
  Eigen::MatrixXd x(states.rows() + 1, states.cols());
  x.topRows(states.rows()) = states;
  x.row(states.rows()) = actions;
  return x;
}

Eigen::MatrixXd MlpCritic::quantiles(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions) const {
  return net_.forward(stack_inputs(states, actions));
}

Eigen::RowVectorXd MlpCritic::action_gradient(const Eigen::MatrixXd& states, const Eigen::RowVectorXd& actions,
                                              const Eigen::MatrixXd& upstream) const {
  const auto g = net_.backward(stack_inputs(states, actions), upstream);
  return g.inputs.row(g.inputs.rows() - 1);
}

ActorGradient actor_gradient(const nn::Mlp& actor, const QuantileCritic& critic, const Eigen::MatrixXd& states,
                             const risk::RiskMeasureSpec& spec) {
  const Eigen::Index batch = states.cols();
  if (batch == 0) throw std::invalid_argument("actor_gradient: empty batch");
  nn::Mlp::Trace trace;
  const Eigen::RowVectorXd actions = actor.forward(states, trace).row(0);
  const Eigen::MatrixXd theta = critic.quantiles(states, actions);

  // The risk measure is linear in the quantiles with weights fixed by their order.
  Eigen::MatrixXd weights(theta.rows(), batch);
  ActorGradient out;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::VectorXd col = theta.col(b);
    const auto w = risk::risk_weights(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), spec);
    for (Eigen::Index n = 0; n < theta.rows(); ++n) weights(n, b) = w[static_cast<std::size_t>(n)];
    out.objective += col.dot(weights.col(b));
  }
  out.objective /= static_cast<double>(batch);
  weights /= static_cast<double>(batch);
  const Eigen::RowVectorXd d_action = critic.action_gradient(states, actions, weights);
  out.params = actor.backward(trace, d_action).params;
  return out;
}

TailGradient tail_gradient(const nn::Mlp& head, const Eigen::VectorXd& input, std::span<const double> quantiles,
                           double u, int n_tail) {
  TailGradient out;
  nn::Mlp::Trace trace;
  const Eigen::VectorXd y = head.forward(Eigen::MatrixXd(input), trace).col(0);
  out.params = gpd::GpdParams{y(0), y(1)};

  std::vector<double> sorted(quantiles.begin(), quantiles.end());
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < n_tail && i < static_cast<int>(sorted.size()); ++i) {
    if (!(sorted[static_cast<std::size_t>(i)] < u)) break;
    out.exceedances.push_back(u - sorted[static_cast<std::size_t>(i)]);
  }
  if (out.exceedances.size() < 2) return out;

  out.usable = true;
  const double n = static_cast<double>(out.exceedances.size());
  out.log_likelihood = gpd::log_likelihood(out.exceedances, out.params) / n;
  const auto g = gpd::log_likelihood_grad(out.exceedances, out.params);
  Eigen::MatrixXd upstream(2, 1);
  upstream << g.d_sigma / n, g.d_epsilon / n;
  out.grad = head.backward(trace, upstream).params;
  return out;
}

nn::MlpSpec critic_spec(const AgentConfig& cfg) {
  return nn::MlpSpec::uniform_head(kStateSize + 1, cfg.hidden, cfg.n_quantiles, nn::OutputHead::identity);
}

nn::MlpSpec actor_spec(const AgentConfig& cfg) {
  return nn::MlpSpec::uniform_head(kStateSize, cfg.hidden, 1, nn::OutputHead::unit_interval);
}

nn::MlpSpec tail_spec(const AgentConfig& cfg) {
  nn::MlpSpec spec = nn::MlpSpec::uniform_head(kStateSize + 1, cfg.hidden, 2, nn::OutputHead::positive);
  spec.heads[1] = nn::OutputHead::unit_interval;
  return spec;
}

namespace {

AgentNets make_nets(const AgentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(derive_seed(seed, 0));
  nn::Mlp critic(critic_spec(cfg), rng);
  nn::Mlp target = critic;
  nn::Mlp actor(actor_spec(cfg), rng);
  nn::Mlp head(tail_spec(cfg), rng);
  return AgentNets{std::move(critic), std::move(target), std::move(actor), std::move(head)};
}

}  // namespace

Agent::Agent(AgentConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      nets_(make_nets(cfg_, seed)),
      opt_{nn::Adam(nets_.critic.params().size(), nn::AdamConfig{cfg_.critic_lr}),
           nn::Adam(nets_.actor.params().size(), nn::AdamConfig{cfg_.actor_lr}),
           nn::Adam(nets_.tail_head.params().size(), nn::AdamConfig{cfg_.tail_lr})} {}

Eigen::MatrixXd Agent::standardize(std::span<const Observation> states) const {
  Eigen::MatrixXd x(kStateSize, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = norm_.standardize(states[i]);
  return x;
}

double Agent::act(const Observation& s) const { return nets_.actor.forward_one(standardize(s))(0); }

Eigen::VectorXd Agent::quantiles(const Observation& s, double a) const {
  return nets_.critic.forward_one(head_input(standardize(s), a));
}

Eigen::VectorXd Agent::target_quantiles(const Observation& s, double a) const {
  return nets_.target_critic.forward_one(head_input(standardize(s), a));
}

gpd::GpdParams Agent::tail_params(const Observation& s, double a) const {
  const Eigen::VectorXd y = nets_.tail_head.forward_one(head_input(standardize(s), a));
  return {y(0), y(1)};
}

TargetSamples Agent::sample_target(const Transition& tr, std::mt19937_64& rng) const {
  TargetSamples out;
  const std::size_t n = static_cast<std::size_t>(cfg_.n_quantiles);
  if (tr.done) {
    // Nothing follows a terminal step; the return is the reward itself.
    if (cfg_.baseline_mode) {
      out.body.assign(n, tr.r);
    } else {
      out.body.assign(static_cast<std::size_t>(cfg_.m_body()), tr.r);
      out.tail.assign(static_cast<std::size_t>(cfg_.m_tail), tr.r);
    }
    return out;
  }

  const Eigen::VectorXd s_next = standardize(tr.s_next);
  const double a_next = nets_.actor.forward_one(s_next)(0);
  const Eigen::VectorXd input = head_input(s_next, a_next);
  const Eigen::VectorXd phi = nets_.target_critic.forward_one(input);

  if (cfg_.baseline_mode) {
    out.body.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.body[i] = tr.r + cfg_.gamma * phi(static_cast<Eigen::Index>(i));
    out.threshold = risk::threshold(std::span<const double>(phi.data(), n), cfg_.beta);
    return out;
  }

  std::vector<double> sorted(phi.data(), phi.data() + phi.size());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n_tail = static_cast<std::size_t>(cfg_.n_tail());
  const double u = sorted[n_tail];
  out.threshold = u;

  const Eigen::VectorXd y = nets_.tail_head.forward_one(input);
  const auto x = gpd::sample(rng, gpd::GpdParams{y(0), y(1)}, static_cast<std::size_t>(cfg_.m_tail));
  out.tail.reserve(x.size());
  for (double xk : x) out.tail.push_back(tr.r + cfg_.gamma * (u - xk));

  // Body levels are the sorted target quantiles at and above the threshold.
  std::uniform_int_distribution<std::size_t> pick(n_tail, n - 1);
  out.body.resize(static_cast<std::size_t>(cfg_.m_body()));
  for (auto& z : out.body) z = tr.r + cfg_.gamma * sorted[pick(rng)];
  return out;
}

CriticGradient Agent::critic_gradient(std::span<const Transition> batch, std::span<const TargetSamples> targets) const {
  if (batch.empty() || batch.size() != targets.size()) {
    throw std::invalid_argument("critic_gradient: batch and targets must be nonempty and of equal size");
  }
  const auto b = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd states(kStateSize, b);
  Eigen::RowVectorXd actions(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    states.col(i) = standardize(batch[static_cast<std::size_t>(i)].s);
    actions(i) = batch[static_cast<std::size_t>(i)].a;
  }
  nn::Mlp::Trace trace;
  const Eigen::MatrixXd theta = nets_.critic.forward(stack_inputs(states, actions), trace);
  Eigen::MatrixXd upstream(theta.rows(), b);
  CriticGradient out;
  const auto weights = cfg_.loss_weights();
  std::vector<double> grad(static_cast<std::size_t>(theta.rows()));
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::VectorXd col = theta.col(i);
    const auto& t = targets[static_cast<std::size_t>(i)];
    out.loss += risk::qr_loss_two_part(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                       t.body, t.tail, grad, weights);
    for (Eigen::Index n = 0; n < theta.rows(); ++n) upstream(n, i) = grad[static_cast<std::size_t>(n)];
  }
  out.loss /= static_cast<double>(b);
  upstream /= static_cast<double>(b);
  out.params = nets_.critic.backward(trace, upstream).params;
  return out;
}

double Agent::critic_update(std::span<const Transition> batch, std::span<const TargetSamples> targets) {
  auto g = critic_gradient(batch, targets);
  if (!std::isfinite(g.loss) || !g.params.allFinite()) {
    std::ostringstream msg;
    msg << "critic_update: non-finite loss " << g.loss << " at update " << updates_;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const auto& t = targets[i];
      const bool finite = std::all_of(t.body.begin(), t.body.end(), [](double z) { return std::isfinite(z); }) &&
                          std::all_of(t.tail.begin(), t.tail.end(), [](double z) { return std::isfinite(z); });
      if (!finite) msg << "; non-finite target samples for batch item " << i << " (threshold " << t.threshold << ")";
    }
    throw std::runtime_error(msg.str());
  }
  opt_.critic.step(nets_.critic.params(), g.params);
  return g.loss;
}

double Agent::critic_update(std::span<const Transition> batch, std::mt19937_64& rng) {
  std::vector<TargetSamples> targets;
  targets.reserve(batch.size());
  for (const auto& tr : batch) targets.push_back(sample_target(tr, rng));
  return critic_update(batch, targets);
}

double Agent::actor_update(std::span<const Observation> states) {
  const MlpCritic critic(nets_.critic);
  auto g = actor_gradient(nets_.actor, critic, standardize(states), cfg_.risk_measure);
  // Adam descends, so the ascent direction enters negated.
  opt_.actor.step(nets_.actor.params(), -g.params);
  return g.objective;
}

std::optional<gpd::GpdParams> Agent::tail_update(const Observation& s) {
  const Eigen::VectorXd x = standardize(s);
  const double a = nets_.actor.forward_one(x)(0);
  const Eigen::VectorXd input = head_input(x, a);
  const Eigen::VectorXd theta = nets_.critic.forward_one(input);
  const Eigen::VectorXd phi = nets_.target_critic.forward_one(input);
  const double u = risk::threshold(std::span<const double>(phi.data(), static_cast<std::size_t>(phi.size())), cfg_.beta);
  auto g = tail_gradient(nets_.tail_head, input,
                         std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())), u,
                         cfg_.n_tail());
  if (!g.usable) return std::nullopt;
  opt_.tail.step(nets_.tail_head.params(), -g.grad);
  return g.params;
}

void Agent::target_sync() { nets_.target_critic.set_params(nets_.critic.params()); }

void Agent::finish_iteration() {
  ++updates_;
  if (updates_ % cfg_.target_sync_period == 0) target_sync();
}

Trainer::Trainer(AgentConfig cfg, market::MarketParams market, std::uint64_t seed)
    : agent_(std::move(cfg), seed),
      env_(market),
      buffer_(agent_.config().replay_capacity),
      rng_(derive_seed(seed, 1)) {}

double Trainer::exploration_std() const {
  const auto& c = agent_.config();
  if (c.exploration_anneal_steps == 0) return c.exploration_std_final;
  const double f = std::min(1.0, static_cast<double>(step_) / static_cast<double>(c.exploration_anneal_steps));
  return c.exploration_std + (c.exploration_std_final - c.exploration_std) * f;
}

TrainMetrics Trainer::train_step() {
  if (need_reset_) {
    obs_ = env_.reset(rng_());
    need_reset_ = false;
  }
  agent_.normalizer().update(obs_);

  std::normal_distribution<double> noise(0.0, 1.0);
  const double a = std::clamp(agent_.act(obs_) + exploration_std() * noise(rng_), 0.0, 1.0);
  const auto res = env_.step(a);

  Transition tr;
  tr.s = obs_;
  tr.a = a;
  tr.r = res.reward;
  tr.s_next = res.observation;
  tr.done = res.done;
  tr.a_next = res.done ? 0.0 : agent_.act(res.observation);
  buffer_.add(tr);
  obs_ = res.observation;
  need_reset_ = res.done;

  TrainMetrics m;
  m.step = ++step_;
  m.reward = res.reward;
  const auto& cfg = agent_.config();
  if (buffer_.size() >= cfg.batch_size) {
    m.learned = true;
    const auto batch = buffer_.sample(rng_, cfg.batch_size);
    m.qr_loss = agent_.critic_update(batch, rng_);
    std::vector<Observation> states;
    states.reserve(batch.size());
    for (const auto& t : batch) states.push_back(t.s);
    m.actor_objective = agent_.actor_update(states);
    if (!cfg.baseline_mode) {
      const auto pick = buffer_.sample(rng_, 1);
      if (!agent_.tail_update(pick.front().s)) ++skips_;
      double sig = 0.0, eps = 0.0;
      for (const auto& s : states) {
        const auto p = agent_.tail_params(s, agent_.act(s));
        sig += p.sigma;
        eps += p.epsilon;
      }
      m.gpd_sigma_mean = sig / static_cast<double>(states.size());
      m.gpd_eps_mean = eps / static_cast<double>(states.size());
    }
    agent_.finish_iteration();
  }
  m.tail_update_skips = skips_;
  return m;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

}  // namespace exdrl::agent
