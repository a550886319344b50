#include "exdrl/config.hpp"

#include <toml.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace exdrl::config {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& msg) { throw ConfigError(field + ": " + msg); }

// Reads the keys of one table against a fixed schema; unknown keys and
// type mismatches are errors.
class TableReader {
 public:
  TableReader(const toml::table& table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const toml::node* find(const std::string& key) {
    known_.insert(key);
    return table_.get(key);
  }

  void number(const std::string& key, double& out) {
    if (const auto* n = find(key)) out = as_number(*n, path(key));
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const auto* n = find(key)) {
      const auto v = n->value_exact<std::int64_t>();
      if (!v) fail(path(key), "expected an integer");
      out = static_cast<Int>(*v);
      if (static_cast<std::int64_t>(out) != *v) fail(path(key), "integer out of range");
    }
  }

  void unsigned_integer(const std::string& key, std::uint64_t& out) {
    std::int64_t v = 0;
    if (find(key) == nullptr) return;
    integer(key, v);
    if (v < 0) fail(path(key), "must be >= 0");
    out = static_cast<std::uint64_t>(v);
  }

  void size(const std::string& key, std::size_t& out) {
    std::uint64_t v = out;
    unsigned_integer(key, v);
    out = static_cast<std::size_t>(v);
  }

  void boolean(const std::string& key, bool& out) {
    if (const auto* n = find(key)) {
      const auto v = n->value_exact<bool>();
      if (!v) fail(path(key), "expected a boolean");
      out = *v;
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const auto* n = find(key)) {
      const auto v = n->value_exact<std::string>();
      if (!v) fail(path(key), "expected a string");
      out = *v;
    }
  }

  void risk(const std::string& key, risk::RiskMeasureSpec& out) {
    std::string text;
    if (find(key) == nullptr) return;
    string(key, text);
    out = parse_risk(text, path(key));
  }

  const toml::array* array(const std::string& key) {
    const auto* n = find(key);
    if (n == nullptr) return nullptr;
    const auto* arr = n->as_array();
    if (arr == nullptr) fail(path(key), "expected an array");
    return arr;
  }

  const toml::table* table(const std::string& key) {
    const auto* n = find(key);
    if (n == nullptr) return nullptr;
    const auto* t = n->as_table();
    if (t == nullptr) fail(path(key), "expected a table");
    return t;
  }

  void reject_unknown() const {
    for (const auto& [k, v] : table_) {
      const std::string key(k.str());
      if (!known_.contains(key)) fail(path(key), "unknown key");
    }
  }

  static double as_number(const toml::node& n, const std::string& field) {
    if (const auto v = n.value_exact<double>()) return *v;
    if (const auto v = n.value_exact<std::int64_t>()) return static_cast<double>(*v);
    fail(field, "expected a number");
  }

  static risk::RiskMeasureSpec parse_risk(const std::string& text, const std::string& field) {
    try {
      return risk::RiskMeasureSpec::parse(text);
    } catch (const std::invalid_argument& e) {
      fail(field, e.what());
    }
  }

 private:
  const toml::table& table_;
  std::string prefix_;
  std::set<std::string> known_;
};

void read_market(TableReader& r, market::MarketParams& m) {
  r.number("s0", m.s0);
  r.number("vol", m.vol);
  r.number("mu", m.mu);
  r.number("r", m.r);
  r.number("q", m.q);
  r.number("days_per_year", m.days_per_year);
  r.integer("horizon", m.horizon);
  r.number("poisson_intensity", m.poisson_intensity);
  r.integer("client_maturity_days", m.client_maturity_days);
  r.integer("hedge_maturity_days", m.hedge_maturity_days);
  r.number("contract_multiplier", m.contract_multiplier);
  r.number("kappa", m.kappa);
  r.reject_unknown();
}

void read_agent(TableReader& r, agent::AgentConfig& a) {
  r.integer("n_quantiles", a.n_quantiles);
  r.integer("m_tail", a.m_tail);
  r.number("beta", a.beta);
  r.risk("risk_measure", a.risk_measure);
  r.number("critic_lr", a.critic_lr);
  r.number("actor_lr", a.actor_lr);
  r.number("tail_lr", a.tail_lr);
  r.size("replay_capacity", a.replay_capacity);
  r.size("batch_size", a.batch_size);
  if (const auto* arr = r.array("hidden")) {
    a.hidden.clear();
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto v = (*arr)[i].value_exact<std::int64_t>();
      if (!v) fail(r.path("hidden") + "[" + std::to_string(i) + "]", "expected an integer");
      a.hidden.push_back(static_cast<int>(*v));
    }
  }
  r.integer("target_sync_period", a.target_sync_period);
  r.number("exploration_std", a.exploration_std);
  r.number("exploration_std_final", a.exploration_std_final);
  r.integer("exploration_anneal_steps", a.exploration_anneal_steps);
  r.number("gamma", a.gamma);
  r.boolean("baseline_mode", a.baseline_mode);
  r.boolean("mass_proportional_weights", a.mass_proportional_weights);
  r.reject_unknown();
}

void read_eval(TableReader& r, RunConfig& c) {
  std::string policy = "agent";
  r.string("policy", policy);
  double action = 0.0;
  const bool has_action = r.find("constant_action") != nullptr;
  r.number("constant_action", action);
  if (policy == "agent") {
    if (has_action) fail(r.path("constant_action"), "only valid with policy = \"constant\"");
    c.scripted_policy.reset();
  } else if (policy == "constant") {
    if (!has_action) fail(r.path("constant_action"), "required with policy = \"constant\"");
    c.scripted_policy = ScriptedPolicy{action};
  } else {
    fail(r.path("policy"), "expected \"agent\" or \"constant\"");
  }
  r.reject_unknown();
}

// Rethrows a component validation error with its field prefixed by `scope`.
template <typename F>
void scoped_validate(const std::string& scope, F&& check) {
  try {
    check();
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    if (msg.rfind(scope + ".", 0) != 0) msg = scope + "." + msg;
    throw ConfigError(msg);
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  if (n_train_steps < 0) fail("n_train_steps", "must be >= 0");
  if (n_eval_scenarios < 1) fail("n_eval_scenarios", "must be >= 1");
  if (output_dir.empty()) fail("output_dir", "must not be empty");
  if (volatilities.empty()) fail("volatilities", "must list at least one volatility");
  for (std::size_t i = 0; i < volatilities.size(); ++i) {
    if (!(volatilities[i] > 0.0) || !std::isfinite(volatilities[i]))
      fail("volatilities[" + std::to_string(i) + "]", "must be positive");
  }
  if (risk_measures.empty()) fail("risk_measures", "must list at least one risk measure");
  if (scripted_policy && !(scripted_policy->action >= 0.0 && scripted_policy->action <= 1.0))
    fail("eval.constant_action", "must lie in [0, 1]");
  scoped_validate("market", [&] { market.validate(); });
  scoped_validate("agent", [&] { agent.validate(); });
}

RunConfig parse_config(std::string_view toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(msg.str());
  }

  RunConfig c;
  TableReader r(root, "");
  r.unsigned_integer("seed", c.seed);
  r.integer("n_train_steps", c.n_train_steps);
  r.integer("n_eval_scenarios", c.n_eval_scenarios);
  r.string("output_dir", c.output_dir);
  if (const auto* arr = r.array("volatilities")) {
    c.volatilities.clear();
    for (std::size_t i = 0; i < arr->size(); ++i)
      c.volatilities.push_back(TableReader::as_number((*arr)[i], "volatilities[" + std::to_string(i) + "]"));
  }
  if (const auto* arr = r.array("risk_measures")) {
    c.risk_measures.clear();
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const std::string field = "risk_measures[" + std::to_string(i) + "]";
      const auto v = (*arr)[i].value_exact<std::string>();
      if (!v) fail(field, "expected a string");
      c.risk_measures.push_back(TableReader::parse_risk(*v, field));
    }
  }
  if (const auto* t = r.table("market")) {
    TableReader sub(*t, "market");
    read_market(sub, c.market);
  }
  if (const auto* t = r.table("agent")) {
    TableReader sub(*t, "agent");
    read_agent(sub, c.agent);
  }
  if (const auto* t = r.table("eval")) {
    TableReader sub(*t, "eval");
    read_eval(sub, c);
  }
  r.reject_unknown();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

nlohmann::json to_json(const market::MarketParams& p) {
  return {{"s0", p.s0},
          {"vol", p.vol},
          {"mu", p.mu},
          {"r", p.r},
          {"q", p.q},
          {"days_per_year", p.days_per_year},
          {"horizon", p.horizon},
          {"poisson_intensity", p.poisson_intensity},
          {"client_maturity_days", p.client_maturity_days},
          {"hedge_maturity_days", p.hedge_maturity_days},
          {"contract_multiplier", p.contract_multiplier},
          {"kappa", p.kappa}};
}

nlohmann::json to_json(const agent::AgentConfig& c) {
  return {{"n_quantiles", c.n_quantiles},
          {"m_tail", c.m_tail},
          {"beta", c.beta},
          {"risk_measure", c.risk_measure.label()},
          {"critic_lr", c.critic_lr},
          {"actor_lr", c.actor_lr},
          {"tail_lr", c.tail_lr},
          {"replay_capacity", c.replay_capacity},
          {"batch_size", c.batch_size},
          {"hidden", c.hidden},
          {"target_sync_period", c.target_sync_period},
          {"exploration_std", c.exploration_std},
          {"exploration_std_final", c.exploration_std_final},
          {"exploration_anneal_steps", c.exploration_anneal_steps},
          {"gamma", c.gamma},
          {"baseline_mode", c.baseline_mode},
          {"mass_proportional_weights", c.mass_proportional_weights}};
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json risks = nlohmann::json::array();
  for (const auto& r : c.risk_measures) risks.push_back(r.label());
  nlohmann::json j{{"seed", c.seed},
                   {"n_train_steps", c.n_train_steps},
                   {"n_eval_scenarios", c.n_eval_scenarios},
                   {"output_dir", c.output_dir},
                   {"volatilities", c.volatilities},
                   {"risk_measures", risks},
                   {"market", to_json(c.market)},
                   {"agent", to_json(c.agent)}};
  if (c.scripted_policy) j["eval"] = {{"policy", "constant"}, {"constant_action", c.scripted_policy->action}};
  return j;
}

agent::AgentConfig agent_config_from_json(const nlohmann::json& j) {
  agent::AgentConfig c;
  try {
    j.at("n_quantiles").get_to(c.n_quantiles);
    j.at("m_tail").get_to(c.m_tail);
    j.at("beta").get_to(c.beta);
    c.risk_measure = risk::RiskMeasureSpec::parse(j.at("risk_measure").get<std::string>());
    j.at("critic_lr").get_to(c.critic_lr);
    j.at("actor_lr").get_to(c.actor_lr);
    j.at("tail_lr").get_to(c.tail_lr);
    j.at("replay_capacity").get_to(c.replay_capacity);
    j.at("batch_size").get_to(c.batch_size);
    j.at("hidden").get_to(c.hidden);
    j.at("target_sync_period").get_to(c.target_sync_period);
    j.at("exploration_std").get_to(c.exploration_std);
    j.at("exploration_std_final").get_to(c.exploration_std_final);
    j.at("exploration_anneal_steps").get_to(c.exploration_anneal_steps);
    j.at("gamma").get_to(c.gamma);
    j.at("baseline_mode").get_to(c.baseline_mode);
    j.at("mass_proportional_weights").get_to(c.mass_proportional_weights);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("agent: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("agent.risk_measure: ") + e.what());
  }
  return c;
}

std::string config_hash(const agent::AgentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

std::string agent_label(const RunConfig& c) {
  if (c.scripted_policy) {
    std::ostringstream out;
    out << "constant(" << c.scripted_policy->action << ")";
    return out.str();
  }
  return c.agent.baseline_mode ? "QR-D4PG" : "EX-D4PG";
}

}  // namespace exdrl::config
