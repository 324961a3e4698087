// Scripted attacker. One action per step along a fixed kill chain:
// ScanSubnet -> ScanHost -> Exploit -> Escalate -> (Pivot) -> Impact.
#include <algorithm>

#include "cyberdef/netsim.hpp"

namespace cyberdef::netsim {

std::vector<int> attack_path(const Scenario& scenario) {
  const int entry = scenario.red_entry_subnet;
  const int op = scenario.op_server_host;
  const bool op_remote = scenario.subnet_of(op) != entry;
  const auto& entry_hosts = scenario.subnets[static_cast<std::size_t>(entry)].hosts;

  std::vector<int> candidates(entry_hosts.begin(), entry_hosts.end());
  std::sort(candidates.begin(), candidates.end());
  std::vector<int> path;
  for (int h : candidates) {
    if (h != op && h != scenario.pivot_host) {
      path.push_back(h);
      break;
    }
  }
  if (op_remote) path.push_back(scenario.pivot_host);
  path.push_back(op);
  return path;
}

namespace {

struct RedContext {
  const Scenario& scenario;
  NetworkState& state;
  int entry;
  int op_subnet;
  bool op_remote;

  HostState& host(int h) { return state.hosts[static_cast<std::size_t>(h)]; }
  bool remote(int h) const { return h >= 0 && scenario.subnet_of(h) != entry; }
  bool blocked(int subnet) const { return state.subnets[static_cast<std::size_t>(subnet)].blocked; }
  // Cross-subnet traffic crosses the upstream links of both subnets.
  bool link_open(int dst_subnet) const { return !blocked(entry) && !blocked(dst_subnet); }
  bool reachable(int h) const { return !remote(h) || link_open(scenario.subnet_of(h)); }
  bool pivot_ready() {
    return scenario.pivot_host >= 0 && host(scenario.pivot_host).red_access == Access::Privileged;
  }
  void mark_scanned(int h) { host(h).event_flags.scan_seen = true; }
};

int index_of(const std::vector<int>& path, int h) {
  const auto it = std::find(path.begin(), path.end(), h);
  return it == path.end() ? 0 : static_cast<int>(it - path.begin());
}

void replan(RedContext& ctx, const std::vector<int>& path) {
  auto& red = ctx.state.red;
  const bool needs_pivot =
      ctx.op_remote && (red.stage == RedStage::Pivot || (red.stage != RedStage::ScanSubnet && ctx.remote(red.target_host)));
  if (needs_pivot && !ctx.pivot_ready()) {
    const int pivot = ctx.scenario.pivot_host;
    red.target_host = pivot;
    red.path_index = index_of(path, pivot);
    red.stage = ctx.host(pivot).red_access == Access::User ? RedStage::Escalate : RedStage::Exploit;
  }
  if (red.stage == RedStage::Escalate && ctx.host(red.target_host).red_access == Access::None)
    red.stage = RedStage::Exploit;
  if (red.stage == RedStage::Impact && ctx.host(red.target_host).red_access != Access::Privileged)
    red.stage = ctx.host(red.target_host).red_access == Access::User ? RedStage::Escalate : RedStage::Exploit;
}

}  // namespace

RedAction red_step(const Scenario& scenario, NetworkState& state, Rng& rng) {
  const auto path = attack_path(scenario);
  RedContext ctx{scenario, state, scenario.red_entry_subnet, scenario.subnet_of(scenario.op_server_host),
                 scenario.subnet_of(scenario.op_server_host) != scenario.red_entry_subnet};
  auto& red = state.red;
  replan(ctx, path);

  RedAction act{red.stage, red.target_host, false};
  switch (red.stage) {
    case RedStage::ScanSubnet: {
      act.target = ctx.entry;
      act.success = true;
      for (int h : scenario.subnets[static_cast<std::size_t>(ctx.entry)].hosts) ctx.mark_scanned(h);
      red.path_index = 0;
      red.target_host = path.front();
      red.stage = RedStage::ScanHost;
      break;
    }
    case RedStage::ScanHost: {
      if (!ctx.reachable(red.target_host)) break;
      act.success = true;
      ctx.mark_scanned(red.target_host);
      red.stage = RedStage::Exploit;
      break;
    }
    case RedStage::Exploit: {
      const double draw = rng.uniform();
      if (!ctx.reachable(red.target_host)) break;
      auto& host = ctx.host(red.target_host);
      if (host.red_access == Access::None) {
        if (!(draw < scenario.exploit_success)) break;
        host.red_access = Access::User;
        host.exploited_this_step = true;
        if (host.peak_access == Access::None) host.peak_access = Access::User;
      }
      act.success = true;
      red.stage = RedStage::Escalate;
      break;
    }
    case RedStage::Escalate: {
      if (!ctx.reachable(red.target_host)) break;
      auto& host = ctx.host(red.target_host);
      host.red_access = Access::Privileged;
      host.peak_access = Access::Privileged;
      act.success = true;
      if (ctx.op_remote && red.target_host == scenario.pivot_host) {
        red.stage = RedStage::Pivot;
      } else if (red.target_host == scenario.op_server_host) {
        red.stage = RedStage::Impact;
      } else {
        red.path_index = std::min(red.path_index + 1, static_cast<int>(path.size()) - 1);
        red.target_host = path[static_cast<std::size_t>(red.path_index)];
        red.stage = RedStage::ScanHost;
      }
      break;
    }
    case RedStage::Pivot: {
      act.target = ctx.op_subnet;
      if (!ctx.link_open(ctx.op_subnet) || !ctx.pivot_ready()) break;
      act.success = true;
      for (int h : scenario.subnets[static_cast<std::size_t>(ctx.op_subnet)].hosts) ctx.mark_scanned(h);
      red.target_host = scenario.op_server_host;
      red.path_index = index_of(path, scenario.op_server_host);
      red.stage = RedStage::ScanHost;
      break;
    }
    case RedStage::Impact: {
      if (!ctx.reachable(red.target_host)) break;
      act.success = true;
      break;
    }
  }
  red.retry_count = act.success ? 0 : red.retry_count + 1;
  return act;
}

}  // namespace cyberdef::netsim
