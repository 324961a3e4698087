#include "cyberdef/oracle.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include "cyberdef/errors.hpp"
#include "cyberdef/netsim.hpp"

namespace cyberdef::netsim {

namespace {

// Everything that can influence future rewards; event flags are cleared at
// the start of every step and so are left out.
std::string state_key(const NetworkState& s, int depth) {
  std::string key;
  key.reserve(8 + s.hosts.size() * 3 + s.subnets.size());
  key += std::to_string(depth) + "|";
  for (const auto& h : s.hosts) {
    key += static_cast<char>('0' + static_cast<int>(h.red_access));
    key += static_cast<char>('0' + static_cast<int>(h.known_compromise));
    key += static_cast<char>('0' + static_cast<int>(h.peak_access));
  }
  for (const auto& sub : s.subnets) key += sub.blocked ? 'B' : 'o';
  key += "|" + std::to_string(static_cast<int>(s.red.stage)) + "," + std::to_string(s.red.target_host) + "," +
         std::to_string(s.red.path_index);
  return key;
}

struct Search {
  const Scenario& scenario;
  int horizon;
  std::unordered_map<std::string, std::pair<double, std::vector<BlueAction>>> memo;
  std::uint64_t expanded = 0;

  double advance(const NetworkState& state, const std::vector<BlueAction>& joint, NetworkState& next) {
    next = state;
    for (auto& h : next.hosts) {
      h.event_flags = {};
      h.exploited_this_step = false;
    }
    std::vector<bool> charged(next.subnets.size(), false);
    std::vector<ResolvedBlueAction> resolved;
    resolved.reserve(joint.size());
    for (std::size_t i = 0; i < joint.size(); ++i)
      resolved.push_back({static_cast<int>(i), joint[i], apply_blue(scenario, next, static_cast<int>(i), joint[i], &charged)});
    // Exploits always succeed here, so the stream only feeds alert sampling,
    // which never affects rewards.
    Rng rng(0);
    red_step(scenario, next, rng);
    sample_detection(next, rng);
    next.step = state.step + 1;
    return compute_reward(scenario, next, resolved, charged).total;
  }

  // Best achievable reward from `state` with `remaining` steps left. The
  // argmax joint action for this node is stored in the memo entry.
  double value(const NetworkState& state, int remaining) {
    if (remaining == 0) return 0.0;
    const auto key = state_key(state, remaining);
    if (auto it = memo.find(key); it != memo.end()) return it->second.first;
    ++expanded;

    const std::size_t n = scenario.agents.size();
    std::vector<std::size_t> idx(n, 0);
    std::vector<BlueAction> joint(n);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<BlueAction> best_joint;
    NetworkState next;
    while (true) {
      for (std::size_t i = 0; i < n; ++i) joint[i] = scenario.agents[i].action_space[idx[i]];
      const double r = advance(state, joint, next);
      const double total = r + value(next, remaining - 1);
      if (total > best) {
        best = total;
        best_joint = joint;
      }
      std::size_t k = n;
      while (k > 0) {
        --k;
        if (++idx[k] < scenario.agents[k].action_space.size()) break;
        idx[k] = 0;
        if (k == 0) {
          k = n + 1;
          break;
        }
      }
      if (k == n + 1 || n == 0) break;
    }
    memo.emplace(key, std::make_pair(best, best_joint));
    return best;
  }
};

}  // namespace

BruteForceResult brute_force_value(const Scenario& scenario, int horizon, double budget) {
  if (horizon < 0) throw ContractViolation("brute_force_value: negative horizon");
  Scenario pinned = scenario;
  pinned.exploit_success = 1.0;
  validate_scenario(pinned);

  const double leaves = std::pow(pinned.joint_action_count(), horizon);
  if (leaves > budget)
    throw ConfigError("budget_exceeded", "joint action space " + std::to_string(static_cast<long long>(pinned.joint_action_count())) +
                                             "^" + std::to_string(horizon) + " = " + std::to_string(leaves) +
                                             " leaf evaluations exceeds the budget of " + std::to_string(budget));

  BruteForceResult out;
  Search search{pinned, horizon, {}, 0};
  auto start = reset(pinned).state;
  out.value = search.value(start, horizon);
  out.nodes_expanded = search.expanded;

  NetworkState cur = start;
  for (int remaining = horizon; remaining > 0; --remaining) {
    const auto& entry = search.memo.at(state_key(cur, remaining));
    out.best_sequence.push_back(entry.second);
    NetworkState next;
    search.advance(cur, entry.second, next);
    cur = next;
  }
  return out;
}

std::vector<double> baseline_returns(const Scenario& scenario, BaselinePolicy policy, int episodes,
                                     std::uint64_t seed) {
  std::vector<double> out;
  std::vector<BlueAction> joint(scenario.agents.size());
  for (int e = 0; e < episodes; ++e) {
    const auto env_seed = derive_seed(seed, {static_cast<std::uint64_t>(e)});
    Environment env(scenario, env_seed);
    env.reset(env_seed);
    Rng actions(derive_seed(env_seed, {0x61637473}));
    double total = 0.0;
    for (int t = 0; t < scenario.horizon; ++t) {
      for (std::size_t i = 0; i < joint.size(); ++i) {
        const auto& space = scenario.agents[i].action_space;
        joint[i] = policy == BaselinePolicy::AllSleep ? BlueAction{ActionKind::Sleep, -1}
                                                      : space[actions.below(space.size())];
      }
      total += env.step(joint).team_reward;
    }
    out.push_back(total);
  }
  return out;
}

}  // namespace cyberdef::netsim
