#include "exdrl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace exdrl::nn {

namespace {

// Largest double below one; logistic outputs are clamped to stay inside (0, 1).
const double kBelowOne = std::nextafter(1.0, 0.0);
constexpr double kAboveZero = std::numeric_limits<double>::min();

double logistic(double x) {
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return std::clamp(s, kAboveZero, kBelowOne);
}

double softplus(double x) {
  const double s = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  return std::max(s, kAboveZero);
}

}  // namespace

std::string to_string(OutputHead head) {
  switch (head) {
    case OutputHead::identity: return "identity";
    case OutputHead::unit_interval: return "unit_interval";
    case OutputHead::positive: return "positive";
  }
  return "identity";
}

OutputHead head_from_string(const std::string& name) {
  if (name == "identity") return OutputHead::identity;
  if (name == "unit_interval") return OutputHead::unit_interval;
  if (name == "positive") return OutputHead::positive;
  throw std::invalid_argument("unknown output head '" + name + "'");
}

MlpSpec MlpSpec::uniform_head(int inputs, const std::vector<int>& hidden, int outputs, OutputHead head) {
  MlpSpec spec;
  spec.layer_sizes.push_back(inputs);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(outputs);
  spec.heads.assign(static_cast<std::size_t>(std::max(outputs, 0)), head);
  return spec;
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 3) throw std::invalid_argument("MlpSpec: need at least one hidden layer");
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("MlpSpec: layer sizes must be >= 1");
  }
  if (heads.size() != static_cast<std::size_t>(outputs())) {
    throw std::invalid_argument("MlpSpec: one output head per output is required");
  }
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += static_cast<std::size_t>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
  }
  return n;
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  params_ = ParamSet::Zero(static_cast<Eigen::Index>(spec_.param_count()));
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(spec_.layer_sizes[l + 1]) * (spec_.layer_sizes[l] + 1);
  }
}

Mlp::Mlp(MlpSpec spec, std::mt19937_64& rng) : Mlp(std::move(spec)) {
  for (std::size_t l = 0; l + 1 < spec_.layer_sizes.size(); ++l) {
    const int in = spec_.layer_sizes[l];
    const int out = spec_.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    const auto off = static_cast<Eigen::Index>(offsets_[l]);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(out) * in; ++i) params_[off + i] = u(rng);
  }
}

void Mlp::set_params(const ParamSet& params) {
  if (params.size() != params_.size()) throw std::invalid_argument("Mlp::set_params: size mismatch");
  params_ = params;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs) const {
  Trace trace;
  return forward(inputs, trace);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& inputs, Trace& trace) const {
  if (inputs.rows() != spec_.inputs()) {
    throw std::invalid_argument("Mlp::forward: expected " + std::to_string(spec_.inputs()) + " inputs, got " +
                                std::to_string(inputs.rows()));
  }
  const std::size_t n_layers = spec_.layer_sizes.size() - 1;
  trace.activations.clear();
  trace.activations.push_back(inputs);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const int in = spec_.layer_sizes[l];
    const int out = spec_.layer_sizes[l + 1];
    const auto off = static_cast<Eigen::Index>(offsets_[l]);
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + off, out, in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + off + static_cast<Eigen::Index>(out) * in, out);
    Eigen::MatrixXd z = w * trace.activations.back();
    z.colwise() += b;
    if (l + 1 < n_layers) {
      trace.activations.push_back(z.array().tanh().matrix());
    } else {
      trace.raw_output = std::move(z);
    }
  }
  trace.output.resize(trace.raw_output.rows(), trace.raw_output.cols());
  for (Eigen::Index r = 0; r < trace.raw_output.rows(); ++r) {
    const OutputHead head = spec_.heads[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < trace.raw_output.cols(); ++c) {
      const double x = trace.raw_output(r, c);
      switch (head) {
        case OutputHead::identity: trace.output(r, c) = x; break;
        case OutputHead::unit_interval: trace.output(r, c) = logistic(x); break;
        case OutputHead::positive: trace.output(r, c) = softplus(x); break;
      }
    }
  }
  return trace.output;
}

Eigen::VectorXd Mlp::forward_one(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Mlp::Gradients Mlp::backward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream) const {
  Trace trace;
  forward(inputs, trace);
  return backward(trace, upstream);
}

Mlp::Gradients Mlp::backward(const Trace& trace, const Eigen::MatrixXd& upstream) const {
  if (upstream.rows() != spec_.outputs() || upstream.cols() != trace.output.cols()) {
    throw std::invalid_argument("Mlp::backward: upstream gradient shape mismatch");
  }
  Gradients g;
  g.params = ParamSet::Zero(params_.size());

  // Through the output heads.
  Eigen::MatrixXd delta(upstream.rows(), upstream.cols());
  for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
    const OutputHead head = spec_.heads[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < upstream.cols(); ++c) {
      double d = 1.0;
      if (head == OutputHead::unit_interval) {
        const double s = trace.output(r, c);
        d = s * (1.0 - s);
      } else if (head == OutputHead::positive) {
        d = logistic(trace.raw_output(r, c));
      }
      delta(r, c) = upstream(r, c) * d;
    }
  }

  const std::size_t n_layers = spec_.layer_sizes.size() - 1;
  for (std::size_t l = n_layers; l-- > 0;) {
    const int in = spec_.layer_sizes[l];
    const int out = spec_.layer_sizes[l + 1];
    const auto off = static_cast<Eigen::Index>(offsets_[l]);
    const Eigen::MatrixXd& a_in = trace.activations[l];
    Eigen::Map<Eigen::MatrixXd> gw(g.params.data() + off, out, in);
    Eigen::Map<Eigen::VectorXd> gb(g.params.data() + off + static_cast<Eigen::Index>(out) * in, out);
    gw.noalias() = delta * a_in.transpose();
    gb = delta.rowwise().sum();
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + off, out, in);
    Eigen::MatrixXd back = w.transpose() * delta;
    if (l > 0) {
      // tanh'(z) = 1 - tanh(z)^2 on the stored hidden outputs.
      delta = back.array() * (1.0 - a_in.array().square());
    } else {
      g.inputs = std::move(back);
    }
  }
  return g;
}

Adam::Adam(std::size_t n_params, AdamConfig config)
    : config_(config),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))) {}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: size mismatch");
  }
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grads;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() -= config_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + config_.epsilon);
}

void Adam::restore(std::int64_t t, Eigen::VectorXd m, Eigen::VectorXd v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw std::invalid_argument("Adam::restore: size mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace exdrl::nn
