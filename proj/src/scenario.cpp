#include "cyberdef/scenario.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "cyberdef/errors.hpp"

namespace cyberdef {

int Scenario::subnet_of(int host) const {
  for (const auto& subnet : subnets)
    if (std::find(subnet.hosts.begin(), subnet.hosts.end(), host) != subnet.hosts.end()) return subnet.id;
  return -1;
}

std::size_t Scenario::obs_len() const { return agents.empty() ? 0 : agents.front().padded_obs_len; }

double Scenario::joint_action_count() const {
  double count = 1.0;
  for (const auto& agent : agents) count *= static_cast<double>(agent.action_space.size());
  return count;
}

namespace {

constexpr std::array<std::string_view, 4> kBuiltins = {"homogeneous", "heterogeneous", "host_based",
                                                       "micro"};

std::vector<BlueAction> host_actions(ActionKind kind, const std::vector<int>& hosts) {
  std::vector<BlueAction> out;
  for (int h : hosts) out.push_back({kind, h});
  return out;
}

void append(std::vector<BlueAction>& dst, const std::vector<BlueAction>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

AgentSpec subnet_agent(int id, const SubnetSpec& subnet, bool may_block) {
  AgentSpec agent;
  agent.id = id;
  agent.name = "Blue" + std::to_string(subnet.id);
  agent.visible_hosts = subnet.hosts;
  agent.visible_subnets = {subnet.id};
  agent.action_space = {{ActionKind::Sleep, -1}, {ActionKind::Monitor, -1}};
  append(agent.action_space, host_actions(ActionKind::Analyse, subnet.hosts));
  append(agent.action_space, host_actions(ActionKind::Remove, subnet.hosts));
  append(agent.action_space, host_actions(ActionKind::Restore, subnet.hosts));
  if (may_block) {
    agent.action_space.push_back({ActionKind::Block, subnet.id});
    agent.action_space.push_back({ActionKind::Unblock, subnet.id});
  }
  return agent;
}

AgentSpec firewall_agent(int id, const std::vector<SubnetSpec>& subnets) {
  AgentSpec agent;
  agent.id = id;
  agent.name = "BlueFW";
  agent.action_space = {{ActionKind::Sleep, -1}};
  for (const auto& subnet : subnets) {
    agent.visible_subnets.push_back(subnet.id);
    agent.action_space.push_back({ActionKind::Block, subnet.id});
    agent.action_space.push_back({ActionKind::Unblock, subnet.id});
  }
  return agent;
}

AgentSpec host_agent(int id, int host) {
  AgentSpec agent;
  agent.id = id;
  agent.name = "BlueHost" + std::to_string(host);
  agent.visible_hosts = {host};
  agent.action_space = {{ActionKind::Sleep, -1},
                        {ActionKind::Analyse, host},
                        {ActionKind::Remove, host},
                        {ActionKind::Restore, host}};
  return agent;
}

Scenario six_host_topology(std::string name) {
  Scenario s;
  s.name = std::move(name);
  s.host_count = 6;
  s.subnets = {{0, {0, 1, 2}}, {1, {3, 4, 5}}};
  s.op_server_host = 5;
  s.pivot_host = 2;
  s.red_entry_subnet = 0;
  return s;
}

void require(bool ok, const char* rule, const std::string& message) {
  if (!ok) throw ConfigError(rule, message);
}

}  // namespace

Scenario build_scenario(ScenarioKind kind) {
  Scenario s;
  switch (kind) {
    case ScenarioKind::Homogeneous:
      s = six_host_topology("homogeneous");
      s.agents = {subnet_agent(0, s.subnets[0], true), subnet_agent(1, s.subnets[1], true)};
      break;
    case ScenarioKind::Heterogeneous:
      s = six_host_topology("heterogeneous");
      s.agents = {subnet_agent(0, s.subnets[0], false), subnet_agent(1, s.subnets[1], false),
                  firewall_agent(2, s.subnets)};
      break;
    case ScenarioKind::HostBased:
      s = six_host_topology("host_based");
      for (int h = 0; h < s.host_count; ++h) s.agents.push_back(host_agent(h, h));
      s.agents.push_back(firewall_agent(s.host_count, s.subnets));
      s.reward_table.analyse_unnecessary_cost = -0.5;
      break;
  }
  finalize_observation_lengths(s);
  return s;
}

Scenario build_micro_scenario() {
  Scenario s;
  s.name = "micro";
  s.host_count = 2;
  s.subnets = {{0, {0}}, {1, {1}}};
  s.op_server_host = 1;
  s.pivot_host = 0;
  s.red_entry_subnet = 0;
  s.horizon = 4;
  s.agents = {subnet_agent(0, s.subnets[0], true), subnet_agent(1, s.subnets[1], true)};
  finalize_observation_lengths(s);
  return s;
}

std::span<const std::string_view> builtin_scenario_names() { return kBuiltins; }

Scenario builtin_scenario(std::string_view name) {
  if (name == "homogeneous") return build_scenario(ScenarioKind::Homogeneous);
  if (name == "heterogeneous") return build_scenario(ScenarioKind::Heterogeneous);
  if (name == "host_based") return build_scenario(ScenarioKind::HostBased);
  if (name == "micro") return build_micro_scenario();
  std::string known;
  for (auto n : kBuiltins) known += (known.empty() ? "" : ", ") + std::string(n);
  throw ConfigError("unknown_scenario", "unknown scenario '" + std::string(name) + "' (built-ins: " + known + ")");
}

void finalize_observation_lengths(Scenario& scenario) {
  std::size_t longest = 0;
  for (auto& agent : scenario.agents) {
    agent.raw_obs_len = kBitsPerHost * agent.visible_hosts.size() + kBitsPerSubnet * agent.visible_subnets.size();
    longest = std::max(longest, agent.raw_obs_len);
  }
  for (auto& agent : scenario.agents) agent.padded_obs_len = longest;
}

bool action_is_valid(const Scenario& scenario, const AgentSpec& agent, const BlueAction& action) {
  if (!target_matches_kind(action)) return false;
  switch (target_kind(action.kind)) {
    case TargetKind::Host:
      if (action.target >= scenario.host_count) return false;
      break;
    case TargetKind::Subnet:
      if (action.target >= static_cast<int>(scenario.subnets.size())) return false;
      break;
    case TargetKind::None:
      break;
  }
  return std::find(agent.action_space.begin(), agent.action_space.end(), action) != agent.action_space.end();
}

void validate_scenario(const Scenario& s) {
  require(s.horizon >= 1, "horizon_positive", "horizon must be at least 1");
  require(s.gamma > 0.0 && s.gamma <= 1.0, "gamma_range", "gamma must lie in (0, 1]");
  require(s.exploit_success >= 0.0 && s.exploit_success <= 1.0, "exploit_success_range",
          "exploit_success must lie in [0, 1]");
  require(s.host_count >= 1, "host_count_positive", "scenario needs at least one host");
  require(!s.subnets.empty(), "no_subnets", "scenario needs at least one subnet");

  std::vector<int> owner(static_cast<std::size_t>(s.host_count), -1);
  for (std::size_t i = 0; i < s.subnets.size(); ++i) {
    const auto& subnet = s.subnets[i];
    require(subnet.id == static_cast<int>(i), "subnet_ids", "subnet ids must be 0..S-1 in order");
    require(!subnet.hosts.empty(), "subnet_empty", "subnet " + std::to_string(subnet.id) + " has no hosts");
    for (int h : subnet.hosts) {
      require(h >= 0 && h < s.host_count, "host_out_of_range", "host " + std::to_string(h) + " out of range");
      require(owner[static_cast<std::size_t>(h)] == -1, "host_in_multiple_subnets",
              "host " + std::to_string(h) + " belongs to more than one subnet");
      owner[static_cast<std::size_t>(h)] = subnet.id;
    }
  }
  for (int h = 0; h < s.host_count; ++h)
    require(owner[static_cast<std::size_t>(h)] != -1, "host_without_subnet",
            "host " + std::to_string(h) + " belongs to no subnet");

  require(s.op_server_host != -1, "op_server_missing", "scenario must name an op_server host");
  require(s.op_server_host >= 0 && s.op_server_host < s.host_count, "op_server_out_of_range",
          "op_server host does not exist");
  require(s.red_entry_subnet >= 0 && s.red_entry_subnet < static_cast<int>(s.subnets.size()),
          "red_entry_subnet_invalid", "red entry subnet does not exist");
  if (s.subnet_of(s.op_server_host) != s.red_entry_subnet) {
    require(s.pivot_host >= 0 && s.pivot_host < s.host_count && s.subnet_of(s.pivot_host) == s.red_entry_subnet &&
                s.pivot_host != s.op_server_host,
            "pivot_host_invalid", "op_server lies outside the entry subnet, so a pivot host inside it is required");
  } else {
    require(s.pivot_host == -1 || (s.pivot_host >= 0 && s.pivot_host < s.host_count), "pivot_host_invalid",
            "pivot host does not exist");
  }

  const auto& r = s.reward_table;
  const std::array<double, 8> entries = {r.opserver_privileged, r.host_privileged,  r.host_user,
                                         r.restore_cost,        r.restore_opserver_cost, r.analyse_unnecessary_cost,
                                         r.block_cost,          r.block_justified_discount};
  for (double v : entries) require(std::isfinite(v), "reward_not_finite", "reward entries must be finite");
  for (std::size_t i = 0; i + 1 < entries.size(); ++i)
    require(entries[i] <= 0.0, "reward_sign", "penalty entries must be <= 0");
  require(r.block_justified_discount >= 0.0, "reward_sign", "block_justified_discount must be >= 0");
  for (std::size_t i = 1; i + 1 < entries.size(); ++i)
    require(r.opserver_privileged <= entries[i], "reward_opserver_not_most_negative",
            "opserver_privileged must be the most negative entry");

  require(!s.agents.empty(), "no_agents", "scenario needs at least one agent");
  std::vector<bool> seen(static_cast<std::size_t>(s.host_count), false);
  std::set<std::string> names;
  std::size_t longest = 0;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& agent = s.agents[i];
    const std::string who = "agent " + std::to_string(agent.id);
    require(agent.id == static_cast<int>(i), "agent_order", "agent ids must be 0..N-1 in order");
    require(names.insert(agent.name).second, "agent_name_duplicate", who + " reuses name '" + agent.name + "'");
    require(!agent.action_space.empty(), "agent_action_space_empty", who + " has an empty action space");
    for (std::size_t a = 0; a < agent.action_space.size(); ++a) {
      const auto& action = agent.action_space[a];
      require(action_is_valid(s, agent, action), "invalid_action", who + " has invalid action " + to_string(action));
      for (std::size_t b = 0; b < a; ++b)
        require(!(agent.action_space[b] == action), "duplicate_action", who + " lists " + to_string(action) + " twice");
    }
    for (int h : agent.visible_hosts) {
      require(h >= 0 && h < s.host_count, "visibility_out_of_range", who + " sees a host that does not exist");
      seen[static_cast<std::size_t>(h)] = true;
    }
    for (int sub : agent.visible_subnets)
      require(sub >= 0 && sub < static_cast<int>(s.subnets.size()), "visibility_out_of_range",
              who + " sees a subnet that does not exist");
    const std::size_t raw = kBitsPerHost * agent.visible_hosts.size() + kBitsPerSubnet * agent.visible_subnets.size();
    require(agent.raw_obs_len == raw, "obs_len_mismatch", who + " raw_obs_len disagrees with its visibility");
    longest = std::max(longest, raw);
  }
  for (int h = 0; h < s.host_count; ++h)
    require(seen[static_cast<std::size_t>(h)], "host_not_visible",
            "host " + std::to_string(h) + " is visible to no agent");
  for (const auto& agent : s.agents)
    require(agent.padded_obs_len == longest, "padded_obs_len_mismatch",
            "padded_obs_len must equal the longest raw observation");
}

ObservationVector pad_observation(std::span<const std::uint8_t> raw, std::size_t target_len) {
  if (raw.size() > target_len)
    throw ContractViolation("pad_observation: raw length " + std::to_string(raw.size()) + " exceeds target " +
                            std::to_string(target_len));
  ObservationVector out(target_len, 0);
  std::copy(raw.begin(), raw.end(), out.begin());
  return out;
}

}  // namespace cyberdef
