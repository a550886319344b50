#pragma once

#include "exdrl/agent.hpp"
#include "exdrl/market_env.hpp"
#include "exdrl/quantile_risk.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace exdrl::config {

/// Invalid or incompatible configuration. The message starts with the
/// dotted field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evaluation policy override; the trained actor is used when empty.
struct ScriptedPolicy {
  double action = 0.0;
};

struct RunConfig {
  /// Master seed. Every random stream in a run is derived from it.
  std::uint64_t seed = 1;
  std::int64_t n_train_steps = 10'000;
  int n_eval_scenarios = 5000;
  std::string output_dir = "out";
  /// Volatilities visited by a sweep.
  std::vector<double> volatilities{0.3};
  /// Risk measures visited by a sweep.
  std::vector<risk::RiskMeasureSpec> risk_measures{{risk::RiskKind::cvar, 0.95}};
  std::optional<ScriptedPolicy> scripted_policy;
  market::MarketParams market;
  agent::AgentConfig agent;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

RunConfig parse_config(std::string_view toml_text, const std::string& source = "<string>");
RunConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const market::MarketParams& p);
nlohmann::json to_json(const agent::AgentConfig& c);
nlohmann::json to_json(const RunConfig& c);
agent::AgentConfig agent_config_from_json(const nlohmann::json& j);

/// FNV-1a 64 of the canonical JSON of the agent configuration, as 16 hex digits.
std::string config_hash(const agent::AgentConfig& c);

/// "EX-D4PG" or "QR-D4PG" by mode, or "constant(a)" for a scripted policy.
std::string agent_label(const RunConfig& c);

}  // namespace exdrl::config
