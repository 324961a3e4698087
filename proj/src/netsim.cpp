#include "cyberdef/netsim.hpp"

#include "cyberdef/errors.hpp"

namespace cyberdef::netsim {

std::vector<Foothold> NetworkState::footholds() const {
  std::vector<Foothold> out;
  for (const auto& host : hosts)
    if (host.red_access != Access::None) out.push_back({host.host_id, host.red_access});
  return out;
}

bool NetworkState::red_in_subnet(int subnet_id) const {
  for (const auto& host : hosts)
    if (host.subnet_id == subnet_id && host.red_access != Access::None) return true;
  return false;
}

ResetResult reset(const Scenario& scenario) {
  validate_scenario(scenario);
  ResetResult out;
  auto& st = out.state;
  st.hosts.resize(static_cast<std::size_t>(scenario.host_count));
  for (int h = 0; h < scenario.host_count; ++h) {
    auto& host = st.hosts[static_cast<std::size_t>(h)];
    host.host_id = h;
    host.subnet_id = scenario.subnet_of(h);
    host.is_op_server = h == scenario.op_server_host;
  }
  for (const auto& subnet : scenario.subnets) st.subnets.push_back({subnet.id, false});
  st.red = RedState{};
  st.step = 0;
  st.done = false;
  out.joint_obs = observe_all(scenario, st);
  return out;
}

double apply_blue(const Scenario& scenario, NetworkState& state, int agent_id, const BlueAction& action,
                  std::vector<bool>* charged_block) {
  if (agent_id < 0 || agent_id >= static_cast<int>(scenario.agents.size()))
    throw ContractViolation("apply_blue: agent " + std::to_string(agent_id) + " does not exist");
  const auto& agent = scenario.agents[static_cast<std::size_t>(agent_id)];
  if (!target_matches_kind(action))
    throw ContractViolation("apply_blue: target kind does not match action " + to_string(action));
  if (!action_is_valid(scenario, agent, action))
    throw ContractViolation("apply_blue: " + to_string(action) + " is outside the action space of " + agent.name);

  const auto& table = scenario.reward_table;
  switch (action.kind) {
    case ActionKind::Sleep:
    case ActionKind::Monitor:
      return 0.0;
    case ActionKind::Analyse: {
      auto& host = state.hosts[static_cast<std::size_t>(action.target)];
      switch (host.red_access) {
        case Access::None: host.known_compromise = Knowledge::Clean; break;
        case Access::User: host.known_compromise = Knowledge::User; break;
        case Access::Privileged: host.known_compromise = Knowledge::Privileged; break;
      }
      return host.red_access == Access::None ? table.analyse_unnecessary_cost : 0.0;
    }
    case ActionKind::Remove: {
      auto& host = state.hosts[static_cast<std::size_t>(action.target)];
      if (host.red_access == Access::User) host.red_access = Access::None;
      return 0.0;
    }
    case ActionKind::Restore: {
      auto& host = state.hosts[static_cast<std::size_t>(action.target)];
      host.red_access = Access::None;
      host.event_flags = {};
      host.known_compromise = Knowledge::Clean;
      host.peak_access = Access::None;
      host.exploited_this_step = false;
      return host.is_op_server ? table.restore_opserver_cost : table.restore_cost;
    }
    case ActionKind::Block: {
      auto& subnet = state.subnets[static_cast<std::size_t>(action.target)];
      subnet.blocked = true;
      if (charged_block) {
        if ((*charged_block)[static_cast<std::size_t>(action.target)]) return 0.0;
        (*charged_block)[static_cast<std::size_t>(action.target)] = true;
      }
      return table.block_cost + (state.red_in_subnet(subnet.subnet_id) ? table.block_justified_discount : 0.0);
    }
    case ActionKind::Unblock:
      state.subnets[static_cast<std::size_t>(action.target)].blocked = false;
      return 0.0;
  }
  return 0.0;
}

std::vector<Event> sample_detection(NetworkState& state, Rng& rng) {
  std::vector<Event> events;
  for (auto& host : state.hosts) {
    if (!host.exploited_this_step) continue;
    host.exploited_this_step = false;
    if (rng.bernoulli(kAlertProbability)) {
      host.event_flags.exploit_alert = true;
      if (host.known_compromise == Knowledge::Unknown || host.known_compromise == Knowledge::Clean)
        host.known_compromise = Knowledge::User;
      events.push_back({EventKind::ExploitAlert, host.host_id});
    } else {
      events.push_back({EventKind::ExploitMissed, host.host_id});
    }
  }
  return events;
}

ObservationVector observe_raw(const NetworkState& state, const AgentSpec& agent) {
  ObservationVector bits;
  bits.reserve(agent.raw_obs_len);
  for (int h : agent.visible_hosts) {
    const auto& host = state.hosts[static_cast<std::size_t>(h)];
    bits.push_back(host.event_flags.scan_seen ? 1 : 0);
    bits.push_back(host.event_flags.exploit_alert ? 1 : 0);
    bits.push_back(host.known_compromise == Knowledge::User ? 1 : 0);
    bits.push_back(host.known_compromise == Knowledge::Privileged ? 1 : 0);
  }
  for (int s : agent.visible_subnets) bits.push_back(state.subnets[static_cast<std::size_t>(s)].blocked ? 1 : 0);
  return bits;
}

ObservationVector observe(const NetworkState& state, const AgentSpec& agent) {
  return pad_observation(observe_raw(state, agent), agent.padded_obs_len);
}

std::vector<ObservationVector> observe_all(const Scenario& scenario, const NetworkState& state) {
  std::vector<ObservationVector> out;
  out.reserve(scenario.agents.size());
  for (const auto& agent : scenario.agents) out.push_back(observe(state, agent));
  return out;
}

RewardBreakdown compute_reward(const Scenario& scenario, const NetworkState& next_state,
                               std::span<const ResolvedBlueAction> actions, const std::vector<bool>& charged_block) {
  const auto& table = scenario.reward_table;
  RewardBreakdown out;
  const auto add = [&out](std::string label, int subject, double amount) {
    if (amount == 0.0) return;
    out.items.push_back({std::move(label), subject, amount});
  };
  for (const auto& host : next_state.hosts) {
    if (host.red_access == Access::Privileged)
      add(host.is_op_server ? "opserver_privileged" : "host_privileged", host.host_id,
          host.is_op_server ? table.opserver_privileged : table.host_privileged);
    else if (host.red_access == Access::User)
      add("host_user", host.host_id, table.host_user);
  }
  for (const auto& resolved : actions) add("action:" + to_string(resolved.action), resolved.agent, resolved.cost);
  for (const auto& subnet : next_state.subnets) {
    const auto idx = static_cast<std::size_t>(subnet.subnet_id);
    if (!subnet.blocked || (idx < charged_block.size() && charged_block[idx])) continue;
    add("block_hold", subnet.subnet_id,
        table.block_cost + (next_state.red_in_subnet(subnet.subnet_id) ? table.block_justified_discount : 0.0));
  }
  for (const auto& item : out.items) out.total += item.amount;
  return out;
}

StepResult step(const Scenario& scenario, const NetworkState& state, std::span<const BlueAction> joint_action,
                Rng& rng) {
  if (state.done) throw ContractViolation("step: episode is already done");
  if (joint_action.size() != scenario.agents.size())
    throw ContractViolation("step: expected " + std::to_string(scenario.agents.size()) + " actions, got " +
                            std::to_string(joint_action.size()));

  StepResult out;
  out.next_state = state;
  auto& next = out.next_state;
  for (auto& host : next.hosts) {
    host.event_flags = {};
    host.exploited_this_step = false;
  }

  std::vector<bool> charged(next.subnets.size(), false);
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    const double cost = apply_blue(scenario, next, static_cast<int>(i), joint_action[i], &charged);
    out.info.blue.push_back({static_cast<int>(i), joint_action[i], cost});
  }

  out.info.red = red_step(scenario, next, rng);
  out.info.events = sample_detection(next, rng);
  for (const auto& host : next.hosts)
    if (host.event_flags.scan_seen) out.info.events.push_back({EventKind::ScanSeen, host.host_id});

  auto reward = compute_reward(scenario, next, out.info.blue, charged);
  out.team_reward = reward.total;
  out.info.reward_items = std::move(reward.items);

  next.step = state.step + 1;
  next.done = next.step >= scenario.horizon;
  out.done = next.done;
  out.joint_obs = observe_all(scenario, next);
  return out;
}

Environment::Environment(const Scenario& scenario, std::uint64_t seed)
    : scenario_(&scenario), rng_(environment_rng(seed)) {
  auto r = netsim::reset(scenario);
  state_ = std::move(r.state);
  obs_ = std::move(r.joint_obs);
}

const std::vector<ObservationVector>& Environment::reset(std::uint64_t seed) {
  rng_ = environment_rng(seed);
  auto r = netsim::reset(*scenario_);
  state_ = std::move(r.state);
  obs_ = std::move(r.joint_obs);
  return obs_;
}

StepResult Environment::step(std::span<const BlueAction> joint_action) {
  auto result = netsim::step(*scenario_, state_, joint_action, rng_);
  state_ = result.next_state;
  obs_ = result.joint_obs;
  return result;
}

std::string to_string(RedStage stage) {
  switch (stage) {
    case RedStage::ScanSubnet: return "ScanSubnet";
    case RedStage::ScanHost: return "ScanHost";
    case RedStage::Exploit: return "Exploit";
    case RedStage::Escalate: return "Escalate";
    case RedStage::Pivot: return "Pivot";
    case RedStage::Impact: return "Impact";
  }
  return "?";
}

}  // namespace cyberdef::netsim
