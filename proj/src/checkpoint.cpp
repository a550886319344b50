#include "exdrl/checkpoint.hpp"

#include "exdrl/config.hpp"

#include <fstream>
#include <stdexcept>

namespace exdrl::checkpoint {

namespace {

using nlohmann::json;

json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd to_vec(const json& j, std::size_t expected, const std::string& what) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != expected)
    throw std::runtime_error("checkpoint: " + what + " has " + std::to_string(v.size()) + " values, expected " +
                             std::to_string(expected));
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json net_json(const nn::Mlp& net) {
  json heads = json::array();
  for (auto h : net.spec().heads) heads.push_back(nn::to_string(h));
  return {{"layer_sizes", net.spec().layer_sizes}, {"heads", heads}, {"params", vec(net.params())}};
}

void restore_net(const json& j, nn::Mlp& net, const std::string& name) {
  nn::MlpSpec spec;
  j.at("layer_sizes").get_to(spec.layer_sizes);
  for (const auto& h : j.at("heads")) spec.heads.push_back(nn::head_from_string(h.get<std::string>()));
  if (!(spec == net.spec())) throw std::runtime_error("checkpoint: network '" + name + "' shape does not match the configuration");
  net.set_params(to_vec(j.at("params"), spec.param_count(), name + ".params"));
}

json adam_json(const nn::Adam& opt) {
  return {{"t", opt.steps()}, {"m", vec(opt.first_moment())}, {"v", vec(opt.second_moment())}};
}

void restore_adam(const json& j, nn::Adam& opt, std::size_t n, const std::string& name) {
  opt.restore(j.at("t").get<std::int64_t>(), to_vec(j.at("m"), n, name + ".m"), to_vec(j.at("v"), n, name + ".v"));
}

Loaded restore(const json& j, const agent::AgentConfig& cfg) {
  Loaded out{agent::Agent(cfg, 0), 0};
  auto& a = out.agent;
  try {
    const auto& nets = j.at("networks");
    restore_net(nets.at("critic"), a.nets().critic, "critic");
    restore_net(nets.at("target_critic"), a.nets().target_critic, "target_critic");
    restore_net(nets.at("actor"), a.nets().actor, "actor");
    restore_net(nets.at("tail_head"), a.nets().tail_head, "tail_head");
    const auto& opt = j.at("optimizers");
    restore_adam(opt.at("critic"), a.optimizers().critic, a.nets().critic.spec().param_count(), "critic");
    restore_adam(opt.at("actor"), a.optimizers().actor, a.nets().actor.spec().param_count(), "actor");
    restore_adam(opt.at("tail"), a.optimizers().tail, a.nets().tail_head.spec().param_count(), "tail");
    const auto& norm = j.at("normalizer");
    a.normalizer().restore(norm.at("count").get<std::int64_t>(), norm.at("mean").get<agent::Observation>(),
                           norm.at("m2").get<agent::Observation>());
    a.set_updates(j.at("updates").get<std::int64_t>());
    out.step = j.at("step").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: malformed document: ") + e.what());
  }
  return out;
}

void check_header(const json& j) {
  if (!j.is_object() || j.value("format", "") != kFormat) throw std::runtime_error("checkpoint: not an exdrl checkpoint");
  if (j.value("version", 0) != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + j.value("version", json()).dump());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open checkpoint");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace

json to_json(const agent::Agent& a, std::int64_t step) {
  const auto& n = a.normalizer();
  return {{"format", kFormat},
          {"version", kVersion},
          {"config_hash", config::config_hash(a.config())},
          {"agent_config", config::to_json(a.config())},
          {"step", step},
          {"updates", a.updates()},
          {"normalizer", {{"count", n.count()}, {"mean", n.mean()}, {"m2", n.m2()}}},
          {"networks",
           {{"critic", net_json(a.nets().critic)},
            {"target_critic", net_json(a.nets().target_critic)},
            {"actor", net_json(a.nets().actor)},
            {"tail_head", net_json(a.nets().tail_head)}}},
          {"optimizers",
           {{"critic", adam_json(a.optimizers().critic)},
            {"actor", adam_json(a.optimizers().actor)},
            {"tail", adam_json(a.optimizers().tail)}}}};
}

Loaded from_json(const json& j, const agent::AgentConfig& expected) {
  check_header(j);
  const auto stored = j.value("config_hash", std::string());
  const auto want = config::config_hash(expected);
  if (stored != want)
    throw config::ConfigError("agent: checkpoint was trained with a different agent configuration (hash " + stored +
                              ", config " + want + ")");
  return restore(j, expected);
}

Loaded from_json(const json& j) {
  check_header(j);
  if (!j.contains("agent_config")) throw std::runtime_error("checkpoint: missing agent_config");
  return from_json(j, config::agent_config_from_json(j.at("agent_config")));
}

void save(const std::filesystem::path& path, const agent::Agent& agent, std::int64_t step) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write checkpoint");
  out << to_json(agent, step).dump(1) << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

Loaded load(const std::filesystem::path& path, const agent::AgentConfig& expected) {
  return from_json(read_json(path), expected);
}

Loaded load(const std::filesystem::path& path) { return from_json(read_json(path)); }

}  // namespace exdrl::checkpoint
