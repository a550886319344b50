#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace exdrl::risk {

/// N quantile values at the uniform levels n/N, n = 0..N-1. Values are
/// kept in level order and are not required to be sorted; every risk
/// extraction sorts a copy.
class QuantileDistribution {
 public:
  explicit QuantileDistribution(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double level(std::size_t n) const { return static_cast<double>(n) / static_cast<double>(values_.size()); }
  std::span<const double> values() const { return values_; }
  std::vector<double> sorted() const;

 private:
  std::vector<double> values_;
};

enum class RiskKind { var, cvar };

struct RiskMeasureSpec {
  RiskKind kind = RiskKind::cvar;
  double alpha = 0.95;

  void validate() const;
  /// "VaR95", "CVaR99", ...
  std::string label() const;
  /// Inverse of label(); throws std::invalid_argument.
  static RiskMeasureSpec parse(const std::string& text);
};

/// rho_tau(e) = e * (tau - 1{e < 0}).
inline double pinball(double e, double tau) { return e * (tau - (e < 0.0 ? 1.0 : 0.0)); }

/// Sorted index of the level nearest to p, round(p * n) clamped to [0, n-1].
std::size_t level_index(double p, std::size_t n);

/// Value at risk: sorted value at index round((1 - alpha) * N).
double var_alpha(std::span<const double> values, double alpha);
double var_alpha(const QuantileDistribution& q, double alpha);

/// Mean of the sorted values up to and including the VaR index.
double cvar_alpha(std::span<const double> values, double alpha);
double cvar_alpha(const QuantileDistribution& q, double alpha);

/// Body/tail threshold: sorted value at index round((1 - beta) * N).
double threshold(std::span<const double> values, double beta);
double threshold(const QuantileDistribution& q, double beta);

double risk_measure(std::span<const double> values, const RiskMeasureSpec& spec);

/// Weights w (in the original, unsorted order) such that
/// risk_measure(values) == sum_i w_i * values_i. The weights are the
/// derivative of the risk measure with respect to each value away from ties.
std::vector<double> risk_weights(std::span<const double> values, const RiskMeasureSpec& spec);

/// Relative weight of the body and tail averages in the two-part loss.
struct TwoPartWeights {
  double body = 1.0;
  double tail = 1.0;

  /// Equal weighting of the two averages, as in the EX-QR loss.
  static TwoPartWeights equal() { return {}; }
  /// Body and tail weighted by their probability mass beta and 1 - beta.
  static TwoPartWeights mass_proportional(double beta) { return {beta, 1.0 - beta}; }
};

/// Two-part quantile-regression loss
///   sum_n [ w_body/M_body sum_l rho(z_l - theta_n) + w_tail/M_tail sum_k rho(z_k - theta_n) ]
/// at levels tau_n = n/N, N = theta.size(). An empty sample set contributes
/// zero. When grad is non-empty it receives d loss / d theta_n; where a
/// sample ties with theta_n each part contributes the minimum-norm element
/// of its subdifferential.
double qr_loss_two_part(std::span<const double> theta, std::span<const double> z_body,
                        std::span<const double> z_tail, std::span<double> grad = {},
                        TwoPartWeights weights = TwoPartWeights::equal());

}  // namespace exdrl::risk
