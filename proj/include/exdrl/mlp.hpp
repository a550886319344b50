#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace exdrl::nn {

/// Squashing applied to one raw network output.
enum class OutputHead {
  identity,
  unit_interval,  // logistic, strictly inside (0, 1)
  positive,       // softplus, strictly positive
};

std::string to_string(OutputHead head);
OutputHead head_from_string(const std::string& name);

/// Fully connected network with tanh hidden layers. layer_sizes runs from the
/// input width through the hidden widths to the output width; heads has one
/// entry per output.
struct MlpSpec {
  std::vector<int> layer_sizes;
  std::vector<OutputHead> heads;

  static MlpSpec uniform_head(int inputs, const std::vector<int>& hidden, int outputs, OutputHead head);

  void validate() const;
  int inputs() const { return layer_sizes.front(); }
  int outputs() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  bool operator==(const MlpSpec&) const = default;
};

/// Flat parameters. Layer l stores its weight matrix (out x in, column-major)
/// followed by its bias vector, for l = 0..L-1.
using ParamSet = Eigen::VectorXd;

class Mlp {
 public:
  /// Activations kept by a forward pass for the matching backward pass.
  struct Trace {
    std::vector<Eigen::MatrixXd> activations;  // input, hidden outputs
    Eigen::MatrixXd raw_output;
    Eigen::MatrixXd output;
  };

  struct Gradients {
    ParamSet params;
    Eigen::MatrixXd inputs;
  };

  /// All-zero parameters.
  explicit Mlp(MlpSpec spec);
  /// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
  Mlp(MlpSpec spec, std::mt19937_64& rng);

  const MlpSpec& spec() const { return spec_; }
  const ParamSet& params() const { return params_; }
  ParamSet& params() { return params_; }
  void set_params(const ParamSet& params);

  /// Columns of inputs are samples.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Trace& trace) const;
  Eigen::VectorXd forward_one(const Eigen::VectorXd& input) const;

  /// Reverse-mode derivatives of sum_j <upstream_j, output_j> with respect to
  /// the parameters (summed over the batch) and to every input column.
  Gradients backward(const Trace& trace, const Eigen::MatrixXd& upstream) const;
  Gradients backward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream) const;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }

  MlpSpec spec_;
  ParamSet params_;
  std::vector<std::size_t> offsets_;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment first-order optimiser; step() descends on grads.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n_params, AdamConfig config);

  void step(ParamSet& params, const ParamSet& grads);

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::int64_t steps() const { return t_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  void restore(std::int64_t t, Eigen::VectorXd m, Eigen::VectorXd v);

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t t_ = 0;
};

}  // namespace exdrl::nn
