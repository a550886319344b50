#pragma once

#include "exdrl/agent.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace exdrl::checkpoint {

inline constexpr const char* kFormat = "exdrl-checkpoint";
inline constexpr int kVersion = 1;

struct Loaded {
  agent::Agent agent;
  std::int64_t step = 0;  // environment transitions collected before saving
};

/// Networks, optimiser moments, normaliser and counters. Doubles
/// round-trip exactly.
nlohmann::json to_json(const agent::Agent& agent, std::int64_t step);
/// Throws config::ConfigError when the stored configuration hash differs
/// from the hash of `expected`, std::runtime_error on a malformed document.
Loaded from_json(const nlohmann::json& j, const agent::AgentConfig& expected);
/// Restores with the configuration stored in the document.
Loaded from_json(const nlohmann::json& j);

void save(const std::filesystem::path& path, const agent::Agent& agent, std::int64_t step);
Loaded load(const std::filesystem::path& path, const agent::AgentConfig& expected);
Loaded load(const std::filesystem::path& path);

}  // namespace exdrl::checkpoint
