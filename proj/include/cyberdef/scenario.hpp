#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cyberdef/actions.hpp"

namespace cyberdef {

/// Zero-padded per-agent observation bits.
using ObservationVector = std::vector<std::uint8_t>;

/// Bits per visible host: scan_seen, exploit_alert, known_user, known_privileged.
inline constexpr std::size_t kBitsPerHost = 4;
/// Bits per visible subnet: blocked.
inline constexpr std::size_t kBitsPerSubnet = 1;

struct SubnetSpec {
  int id = 0;
  std::vector<int> hosts;

  friend bool operator==(const SubnetSpec&, const SubnetSpec&) = default;
};

/// Capabilities of one blue agent: what it sees and what it may do.
struct AgentSpec {
  int id = 0;
  std::string name;
  std::vector<int> visible_hosts;
  std::vector<int> visible_subnets;
  std::vector<BlueAction> action_space;
  std::size_t raw_obs_len = 0;
  std::size_t padded_obs_len = 0;

  friend bool operator==(const AgentSpec&, const AgentSpec&) = default;
};

/// Full game definition: topology, red attack parameters, defenders, reward
/// constants, horizon and discount.
struct Scenario {
  std::string name;
  int host_count = 0;
  std::vector<SubnetSpec> subnets;
  int op_server_host = -1;
  int pivot_host = -1;
  int red_entry_subnet = 0;
  double exploit_success = 1.0;
  std::vector<AgentSpec> agents;
  RewardTable reward_table;
  int horizon = 50;
  double gamma = 0.99;

  std::size_t agent_count() const { return agents.size(); }
  int subnet_of(int host) const;
  /// Common (padded) observation length shared by all agents.
  std::size_t obs_len() const;
  /// Joint action space size, the product of per-agent action counts.
  double joint_action_count() const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

enum class ScenarioKind { Homogeneous, Heterogeneous, HostBased };

/// The three built-in six-host, two-subnet scenarios.
Scenario build_scenario(ScenarioKind kind);

/// Two hosts on two subnets, one agent per subnet, horizon 4. Small enough
/// for exhaustive search of the joint action space.
Scenario build_micro_scenario();

/// Built-in lookup by name: homogeneous, heterogeneous, host_based, micro.
/// Throws ConfigError("unknown_scenario") listing the valid names.
Scenario builtin_scenario(std::string_view name);
std::span<const std::string_view> builtin_scenario_names();

/// Recomputes raw/padded observation lengths from the visibility sets.
void finalize_observation_lengths(Scenario& scenario);

/// Checks every scenario invariant, throwing ConfigError naming the rule.
void validate_scenario(const Scenario& scenario);

/// Is `action` executable by `agent` in this scenario (in its action space,
/// well-formed, target exists)?
bool action_is_valid(const Scenario& scenario, const AgentSpec& agent, const BlueAction& action);

/// Zero-pads `raw` to `target_len`. Throws ContractViolation if raw is longer.
ObservationVector pad_observation(std::span<const std::uint8_t> raw, std::size_t target_len);

/// Versioned line-oriented text format; see docs/scenario_format.md.
std::string serialize_scenario(const Scenario& scenario);
Scenario load_scenario(std::string_view text);

/// 16 hex digit FNV-1a digest of the canonical serialization.
std::string scenario_fingerprint(const Scenario& scenario);

}  // namespace cyberdef
