#include "cyberdef/replay.hpp"

#include <algorithm>
#include <exception>

#include "cyberdef/netsim.hpp"

namespace cyberdef::replay {

Report replay(const logs::ActionLog& log) {
  Report report;
  for (const auto& ep : log.episodes) {
    netsim::Environment env(log.scenario, ep.env_seed);
    env.reset(ep.env_seed);
    for (std::size_t t = 0; t < ep.rewards.size(); ++t) {
      const int line = t < ep.step_lines.size() ? ep.step_lines[t] : 0;
      double reward = 0.0;
      try {
        reward = env.step(ep.joint_actions[t]).team_reward;
      } catch (const std::exception& e) {
        report.first_divergence = Divergence{ep.episode, static_cast<int>(t), line, ep.rewards[t], 0.0, e.what()};
        return report;
      }
      ++report.steps;
      if (reward != ep.rewards[t]) {
        report.first_divergence = Divergence{ep.episode, static_cast<int>(t), line, ep.rewards[t], reward, "reward mismatch"};
        return report;
      }
    }
    ++report.episodes;
  }
  return report;
}

ResponseQuery query_block_responses(const logs::ActionLog& log, int window) {
  const auto& s = log.scenario;
  const auto blocks = [](const AgentSpec& a) {
    return std::any_of(a.action_space.begin(), a.action_space.end(),
                       [](const BlueAction& x) { return x.kind == ActionKind::Block; });
  };
  ResponseQuery q;
  for (const auto& ep : log.episodes) {
    netsim::Environment env(s, ep.env_seed);
    env.reset(ep.env_seed);
    std::vector<int> detected(s.agents.size(), -1);
    struct Issued {
      int step;
      int subnet;
    };
    std::vector<Issued> issued;
    for (std::size_t t = 0; t < ep.joint_actions.size(); ++t) {
      const int step = static_cast<int>(t);
      for (const auto& a : s.agents) {
        const auto& act = ep.joint_actions[t][static_cast<std::size_t>(a.id)];
        if (act.kind == ActionKind::Block && blocks(a) && env.state().red_in_subnet(act.target))
          issued.push_back({step, act.target});
      }
      env.step(ep.joint_actions[t]);
      for (const auto& a : s.agents) {
        if (blocks(a) || detected[static_cast<std::size_t>(a.id)] >= 0) continue;
        for (int h : a.visible_hosts) {
          const auto k = env.state().hosts[static_cast<std::size_t>(h)].known_compromise;
          if (k == netsim::Knowledge::User || k == netsim::Knowledge::Privileged) {
            detected[static_cast<std::size_t>(a.id)] = step;
            break;
          }
        }
      }
    }
    bool any = false;
    for (const auto& a : s.agents) {
      const int d = detected[static_cast<std::size_t>(a.id)];
      if (d < 0) continue;
      for (const auto& b : issued)
        if (b.step > d && b.step <= d + window) {
          q.responses.push_back({ep.episode, a.id, d, b.step, b.subnet});
          any = true;
          break;
        }
    }
    ++q.episodes;
    if (any) ++q.episodes_with_response;
  }
  return q;
}

}  // namespace cyberdef::replay
