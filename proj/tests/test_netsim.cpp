#include <doctest.h>

#include <algorithm>
#include <vector>

#include "cyberdef/errors.hpp"
#include "cyberdef/netsim.hpp"
#include "cyberdef/scenario.hpp"

using namespace cyberdef;
using namespace cyberdef::netsim;

namespace {

std::vector<BlueAction> all_sleep(const Scenario& s) { return std::vector<BlueAction>(s.agent_count()); }

std::vector<BlueAction> random_joint(const Scenario& s, Rng& rng) {
  std::vector<BlueAction> out;
  for (const auto& a : s.agents) out.push_back(a.action_space[rng.below(a.action_space.size())]);
  return out;
}

int rank(Knowledge k) { return static_cast<int>(k); }
int rank(Access a) { return static_cast<int>(a) + 1; }  // None ~ Clean, User ~ User, Privileged ~ Privileged

bool acted_on(const std::vector<BlueAction>& joint, ActionKind kind, int host) {
  return std::any_of(joint.begin(), joint.end(), [&](const BlueAction& a) { return a.kind == kind && a.target == host; });
}

bool alerted(const StepInfo& info, int host) {
  return std::any_of(info.events.begin(), info.events.end(),
                     [&](const Event& e) { return e.kind == EventKind::ExploitAlert && e.host == host; });
}

}  // namespace

TEST_CASE("reset gives a clean six-host network with zero observations") {
  for (auto name : builtin_scenario_names()) {
    const auto s = builtin_scenario(name);
    const auto r = reset(s);
    CHECK(r.state.hosts.size() == static_cast<std::size_t>(s.host_count));
    CHECK(r.state.step == 0);
    CHECK_FALSE(r.state.done);
    CHECK(r.state.red.stage == RedStage::ScanSubnet);
    CHECK(r.state.footholds().empty());
    CHECK(std::count_if(r.state.hosts.begin(), r.state.hosts.end(), [](const HostState& h) { return h.is_op_server; }) == 1);
    for (const auto& o : r.joint_obs) CHECK(std::all_of(o.begin(), o.end(), [](auto b) { return b == 0; }));
    const auto again = reset(s);
    CHECK(again.state == r.state);
    CHECK(again.joint_obs == r.joint_obs);
  }
  const auto h = reset(builtin_scenario("homogeneous"));
  CHECK(h.state.hosts.size() == 6);
  CHECK(h.state.subnets.size() == 2);
}

TEST_CASE("reset rejects an invalid scenario") {
  auto s = builtin_scenario("homogeneous");
  s.op_server_host = -1;
  CHECK_THROWS_AS(reset(s), ConfigError);
}

TEST_CASE("all Sleep on a clean network costs nothing") {
  const auto s = builtin_scenario("homogeneous");
  const auto r = reset(s);
  Rng rng(3);
  const auto out = step(s, r.state, all_sleep(s), rng);
  CHECK(out.team_reward == 0.0);
  CHECK(out.info.red.stage == RedStage::ScanSubnet);
  CHECK(out.info.red.target == 0);
  CHECK(out.next_state.step == 1);
}

TEST_CASE("red privileged on the OpServer costs the opserver entry") {
  // Red enters the OpServer's own subnet, so no pivot foothold is implied.
  auto s = builtin_scenario("homogeneous");
  s.red_entry_subnet = 1;
  auto st = reset(s).state;
  st.hosts[5].red_access = Access::Privileged;
  st.hosts[5].peak_access = Access::Privileged;
  st.red.stage = RedStage::Impact;
  st.red.target_host = 5;
  Rng rng(1);
  const auto out = step(s, st, all_sleep(s), rng);
  CHECK(out.team_reward == s.reward_table.opserver_privileged);
}

TEST_CASE("Restore on a privileged non-OpServer host") {
  const auto s = builtin_scenario("homogeneous");
  auto st = reset(s).state;
  st.hosts[1].red_access = Access::Privileged;
  st.hosts[1].known_compromise = Knowledge::Privileged;
  st.red.stage = RedStage::ScanHost;
  st.red.target_host = 0;
  auto joint = all_sleep(s);
  joint[0] = {ActionKind::Restore, 1};
  Rng rng(1);
  const auto out = step(s, st, joint, rng);
  CHECK(out.next_state.hosts[1].red_access == Access::None);
  CHECK(out.next_state.hosts[1].known_compromise == Knowledge::Clean);
  CHECK(out.team_reward == s.reward_table.restore_cost);
}

TEST_CASE("one User host, all Sleep, costs host_user") {
  const auto s = builtin_scenario("homogeneous");
  auto st = reset(s).state;
  st.hosts[4].red_access = Access::User;
  st.red.stage = RedStage::ScanHost;
  st.red.target_host = 0;
  Rng rng(1);
  CHECK(step(s, st, all_sleep(s), rng).team_reward == s.reward_table.host_user);
}

TEST_CASE("red follows the kill chain against an idle defence") {
  const auto s = builtin_scenario("homogeneous");
  Environment env(s, 11);
  std::vector<RedAction> acts;
  for (int t = 0; t < 12; ++t) acts.push_back(env.step(all_sleep(s)).info.red);
  const std::vector<std::pair<RedStage, int>> expected = {
      {RedStage::ScanSubnet, 0}, {RedStage::ScanHost, 0}, {RedStage::Exploit, 0}, {RedStage::Escalate, 0},
      {RedStage::ScanHost, 2},   {RedStage::Exploit, 2},  {RedStage::Escalate, 2}, {RedStage::Pivot, 1},
      {RedStage::ScanHost, 5},   {RedStage::Exploit, 5},  {RedStage::Escalate, 5}, {RedStage::Impact, 5}};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CAPTURE(i);
    CHECK(acts[i].stage == expected[i].first);
    CHECK(acts[i].target == expected[i].second);
    CHECK(acts[i].success);
  }
}

TEST_CASE("User foothold leads to Escalate on that host") {
  const auto s = builtin_scenario("homogeneous");
  Environment env(s, 5);
  for (int t = 0; t < 3; ++t) env.step(all_sleep(s));
  REQUIRE(env.state().hosts[0].red_access == Access::User);
  const auto out = env.step(all_sleep(s));
  CHECK(out.info.red.stage == RedStage::Escalate);
  CHECK(out.info.red.target == 0);
}

TEST_CASE("pivot into a blocked subnet fails without changing footholds") {
  const auto s = builtin_scenario("homogeneous");
  Environment env(s, 9);
  for (int t = 0; t < 7; ++t) env.step(all_sleep(s));
  REQUIRE(env.state().red.stage == RedStage::Pivot);
  const auto before = env.state().footholds();
  auto joint = all_sleep(s);
  joint[1] = {ActionKind::Block, 1};
  const auto out = env.step(joint);
  CHECK(out.info.red.stage == RedStage::Pivot);
  CHECK_FALSE(out.info.red.success);
  CHECK(out.next_state.footholds() == before);
  // Red holds nothing in subnet 1 yet, so the Block is charged in full.
  CHECK(out.info.blue[1].cost == s.reward_table.block_cost);
}

TEST_CASE("apply_blue semantics") {
  const auto hb = builtin_scenario("host_based");
  const auto homo = builtin_scenario("homogeneous");

  SUBCASE("Remove leaves privileged access in place") {
    auto st = reset(homo).state;
    st.hosts[1].red_access = Access::Privileged;
    CHECK(apply_blue(homo, st, 0, {ActionKind::Remove, 1}) == 0.0);
    CHECK(st.hosts[1].red_access == Access::Privileged);
    st.hosts[2].red_access = Access::User;
    apply_blue(homo, st, 0, {ActionKind::Remove, 2});
    CHECK(st.hosts[2].red_access == Access::None);
  }
  SUBCASE("unnecessary Analyse is charged in host_based") {
    auto st = reset(hb).state;
    CHECK(apply_blue(hb, st, 3, {ActionKind::Analyse, 3}) == -0.5);
    CHECK(st.hosts[3].known_compromise == Knowledge::Clean);
    st.hosts[3].red_access = Access::User;
    CHECK(apply_blue(hb, st, 3, {ActionKind::Analyse, 3}) == 0.0);
    CHECK(st.hosts[3].known_compromise == Knowledge::User);
  }
  SUBCASE("justified Block is discounted") {
    auto st = reset(hb).state;
    st.hosts[1].red_access = Access::User;
    const double cost = apply_blue(hb, st, 6, {ActionKind::Block, 0});
    CHECK(cost == hb.reward_table.block_cost + hb.reward_table.block_justified_discount);
    CHECK(st.subnets[0].blocked);
    CHECK(apply_blue(hb, st, 6, {ActionKind::Block, 1}) == hb.reward_table.block_cost);
    apply_blue(hb, st, 6, {ActionKind::Unblock, 0});
    CHECK_FALSE(st.subnets[0].blocked);
  }
  SUBCASE("Restore on the OpServer uses its own cost") {
    auto st = reset(homo).state;
    CHECK(apply_blue(homo, st, 1, {ActionKind::Restore, 5}) == homo.reward_table.restore_opserver_cost);
  }
  SUBCASE("contract violations") {
    auto st = reset(homo).state;
    CHECK_THROWS_AS(apply_blue(homo, st, 0, {ActionKind::Analyse, -1}), ContractViolation);
    CHECK_THROWS_AS(apply_blue(homo, st, 0, {ActionKind::Sleep, 2}), ContractViolation);
    CHECK_THROWS_AS(apply_blue(homo, st, 0, {ActionKind::Analyse, 3}), ContractViolation);
    CHECK_THROWS_AS(apply_blue(homo, st, 7, {ActionKind::Sleep, -1}), ContractViolation);
  }
}

TEST_CASE("step rejects invalid joint actions and finished episodes") {
  const auto s = builtin_scenario("micro");
  auto st = reset(s).state;
  Rng rng(0);
  std::vector<BlueAction> bad = {{ActionKind::Restore, 1}, {ActionKind::Sleep, -1}};
  CHECK_THROWS_AS(step(s, st, bad, rng), ContractViolation);
  CHECK_THROWS_AS(step(s, st, std::vector<BlueAction>(1), rng), ContractViolation);
  st.done = true;
  CHECK_THROWS_AS(step(s, st, all_sleep(s), rng), ContractViolation);
}

TEST_CASE("standing block charges every step until unblocked") {
  const auto s = builtin_scenario("homogeneous");
  Environment env(s, 2);
  auto joint = all_sleep(s);
  joint[1] = {ActionKind::Block, 1};
  CHECK(env.step(joint).team_reward == s.reward_table.block_cost);
  CHECK(env.step(all_sleep(s)).team_reward == s.reward_table.block_cost);
  joint[1] = {ActionKind::Unblock, 1};
  const auto out = env.step(joint);
  CHECK_FALSE(out.next_state.subnets[1].blocked);
}

TEST_CASE("observations") {
  const auto het = builtin_scenario("heterogeneous");
  auto st = reset(het).state;
  CHECK(observe_raw(st, het.agents[2]).size() == 2);
  st.subnets[1].blocked = true;
  CHECK(observe_raw(st, het.agents[2]) == ObservationVector{0, 1});
  st.hosts[4].event_flags.scan_seen = true;
  st.hosts[4].known_compromise = Knowledge::Privileged;
  CHECK(observe_raw(st, het.agents[1]) == ObservationVector{0, 0, 0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1});
  CHECK(observe_raw(st, het.agents[0]) == ObservationVector(13, 0));

  // The entry-subnet scan is visible to the agent watching it.
  Environment env(het, 4);
  const auto out = env.step(all_sleep(het));
  for (int h = 0; h < 3; ++h) CHECK(out.joint_obs[0][static_cast<std::size_t>(4 * h)] == 1);
}

TEST_CASE("exploit alert frequency is one half") {
  auto st = reset(builtin_scenario("homogeneous")).state;
  Rng rng(77);
  int alerts = 0;
  constexpr int kTrials = 10000;
  for (int i = 0; i < kTrials; ++i) {
    st.hosts[0].exploited_this_step = true;
    st.hosts[0].event_flags = {};
    st.hosts[0].known_compromise = Knowledge::Unknown;
    const auto events = sample_detection(st, rng);
    REQUIRE(events.size() == 1);
    if (events[0].kind == EventKind::ExploitAlert) {
      ++alerts;
      CHECK(st.hosts[0].event_flags.exploit_alert);
      CHECK(st.hosts[0].known_compromise == Knowledge::User);
    }
  }
  const double rate = static_cast<double>(alerts) / kTrials;
  CHECK(rate >= 0.48);
  CHECK(rate <= 0.52);
}

TEST_CASE("episode terminates exactly at the horizon") {
  const auto s = builtin_scenario("micro");
  Environment env(s, 1);
  for (int t = 1; t <= s.horizon; ++t) {
    const auto out = env.step(all_sleep(s));
    CHECK(out.next_state.step == t);
    CHECK(out.done == (t == s.horizon));
  }
}

// Randomized property checks over many episodes with uniformly random defenders.
TEST_CASE("simulator invariants under random play") {
  for (auto name : {"homogeneous", "heterogeneous", "host_based", "micro"}) {
    const auto s = builtin_scenario(name);
    CAPTURE(name);
    const int remote_subnet = s.subnet_of(s.op_server_host);
    for (std::uint64_t ep = 0; ep < 60; ++ep) {
      Rng policy_rng(derive_seed(ep, {99}));
      Rng env_rng(derive_seed(ep, {100}));
      Rng replay_rng(derive_seed(ep, {100}));
      auto st = reset(s).state;
      auto replay_state = st;
      while (!st.done) {
        const auto joint = random_joint(s, policy_rng);
        const auto out = step(s, st, joint, env_rng);
        const auto again = step(s, replay_state, joint, replay_rng);

        // Determinism.
        REQUIRE(again.next_state == out.next_state);
        REQUIRE(again.joint_obs == out.joint_obs);
        REQUIRE(again.team_reward == out.team_reward);

        // Reward decomposition.
        double total = 0.0;
        for (const auto& item : out.info.reward_items) total += item.amount;
        CHECK(total == out.team_reward);

        // Block soundness: nothing crosses into the OpServer subnet while either link is down.
        const bool cut = out.next_state.subnets[static_cast<std::size_t>(remote_subnet)].blocked ||
                         out.next_state.subnets[static_cast<std::size_t>(s.red_entry_subnet)].blocked;
        if (cut && remote_subnet != s.red_entry_subnet) {
          const auto& red = out.info.red;
          const bool crosses = red.stage == RedStage::Pivot ||
                               (red.stage != RedStage::ScanSubnet && red.target >= 0 && s.subnet_of(red.target) == remote_subnet);
          if (crosses) CHECK_FALSE(red.success);
          for (const auto& h : out.next_state.hosts)
            if (h.subnet_id == remote_subnet)
              CHECK(rank(h.red_access) <= rank(st.hosts[static_cast<std::size_t>(h.host_id)].red_access));
        }

        for (std::size_t h = 0; h < out.next_state.hosts.size(); ++h) {
          const auto& before = st.hosts[h];
          const auto& after = out.next_state.hosts[h];
          const int host = static_cast<int>(h);
          // Detection never invents compromise beyond what red has held since the last Restore.
          if (after.known_compromise == Knowledge::User || after.known_compromise == Knowledge::Privileged)
            CHECK(rank(after.known_compromise) <= rank(after.peak_access));
          // Knowledge changes only through Analyse, Restore or an alert.
          if (after.known_compromise != before.known_compromise) {
            const bool explained = acted_on(joint, ActionKind::Analyse, host) ||
                                   acted_on(joint, ActionKind::Restore, host) || alerted(out.info, host);
            CHECK(explained);
            if (rank(after.known_compromise) > rank(before.known_compromise) &&
                rank(after.known_compromise) > rank(Knowledge::Clean))
              CHECK((acted_on(joint, ActionKind::Analyse, host) || alerted(out.info, host)));
          }
        }
        // Block state only changes through Block/Unblock.
        for (std::size_t k = 0; k < out.next_state.subnets.size(); ++k)
          if (out.next_state.subnets[k].blocked != st.subnets[k].blocked)
            CHECK((acted_on(joint, ActionKind::Block, static_cast<int>(k)) ||
                   acted_on(joint, ActionKind::Unblock, static_cast<int>(k))));

        CHECK(out.next_state.step <= s.horizon);
        CHECK(out.done == (out.next_state.step == s.horizon));
        st = out.next_state;
        replay_state = again.next_state;
      }
    }
  }
}
