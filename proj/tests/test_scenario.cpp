#include <doctest.h>

#include <algorithm>
#include <string>

#include "cyberdef/errors.hpp"
#include "cyberdef/netsim.hpp"
#include "cyberdef/scenario.hpp"

using namespace cyberdef;

namespace {

std::string rule_of(const std::string& text) {
  try {
    load_scenario(text);
  } catch (const ConfigError& e) {
    return e.rule();
  }
  return "";
}

std::string replace_once(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
  return text;
}

}  // namespace

TEST_CASE("homogeneous scenario has two identical subnet agents") {
  const auto s = build_scenario(ScenarioKind::Homogeneous);
  CHECK(s.host_count == 6);
  CHECK(s.subnets.size() == 2);
  REQUIRE(s.agent_count() == 2);
  CHECK(s.agents[0].action_space.size() == s.agents[1].action_space.size());
  CHECK(s.horizon == 50);
  CHECK(s.gamma == doctest::Approx(0.99));
  CHECK(s.reward_table.analyse_unnecessary_cost == 0.0);
}

TEST_CASE("heterogeneous firewall agent only blocks and unblocks") {
  const auto s = build_scenario(ScenarioKind::Heterogeneous);
  REQUIRE(s.agent_count() == 3);
  const auto& fw = s.agents.back();
  CHECK(fw.name == "BlueFW");
  CHECK(fw.visible_hosts.empty());
  CHECK(fw.raw_obs_len == 2);
  std::vector<BlueAction> expected = {{ActionKind::Sleep, -1},
                                      {ActionKind::Block, 0},
                                      {ActionKind::Unblock, 0},
                                      {ActionKind::Block, 1},
                                      {ActionKind::Unblock, 1}};
  CHECK(fw.action_space == expected);
  for (const auto& a : fw.action_space) CHECK(target_kind(a.kind) != TargetKind::Host);
  for (std::size_t i = 0; i + 1 < s.agent_count(); ++i)
    for (const auto& a : s.agents[i].action_space) CHECK(target_kind(a.kind) != TargetKind::Subnet);
}

TEST_CASE("host_based scenario has one agent per host plus the firewall") {
  const auto s = build_scenario(ScenarioKind::HostBased);
  REQUIRE(s.agent_count() == 7);
  for (int h = 0; h < 6; ++h) {
    const auto& a = s.agents[static_cast<std::size_t>(h)];
    CHECK(a.visible_hosts == std::vector<int>{h});
    CHECK(a.raw_obs_len == 4);
    for (const auto& act : a.action_space) CHECK((act.target == -1 || act.target == h));
  }
  CHECK(s.agents.back().name == "BlueFW");
  CHECK(s.reward_table.analyse_unnecessary_cost == -0.5);
  CHECK(s.reward_table.block_justified_discount == 0.3);
}

TEST_CASE("padded lengths equal the scenario-wide maximum raw length") {
  for (auto name : builtin_scenario_names()) {
    const auto s = builtin_scenario(name);
    std::size_t longest = 0;
    for (const auto& a : s.agents) longest = std::max(longest, a.visible_hosts.size() * 4 + a.visible_subnets.size());
    for (const auto& a : s.agents) CHECK(a.padded_obs_len == longest);
    const auto obs = netsim::reset(s).joint_obs;
    for (const auto& o : obs) CHECK(o.size() == longest);
  }
}

TEST_CASE("builders are pure and every listed action is valid") {
  for (auto name : builtin_scenario_names()) {
    const auto a = builtin_scenario(name);
    CHECK(a == builtin_scenario(name));
    CHECK_NOTHROW(validate_scenario(a));
    for (const auto& agent : a.agents)
      for (const auto& act : agent.action_space) CHECK(action_is_valid(a, agent, act));
  }
}

TEST_CASE("unknown built-in name lists the built-ins") {
  try {
    builtin_scenario("nope");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.rule() == "unknown_scenario");
    CHECK(std::string(e.what()).find("host_based") != std::string::npos);
  }
}

TEST_CASE("serialization round-trips every built-in") {
  for (auto name : builtin_scenario_names()) {
    const auto s = builtin_scenario(name);
    const auto text = serialize_scenario(s);
    CHECK(load_scenario(text) == s);
    CHECK(scenario_fingerprint(load_scenario(text)) == scenario_fingerprint(s));
  }
  CHECK(scenario_fingerprint(builtin_scenario("homogeneous")) != scenario_fingerprint(builtin_scenario("heterogeneous")));
}

TEST_CASE("load_scenario names the failing rule") {
  const auto text = serialize_scenario(builtin_scenario("homogeneous"));
  CHECK(rule_of(replace_once(text, "op_server = 5\n", "")) == "op_server_missing");
  CHECK(rule_of(replace_once(text, "hosts = 3 4 5", "hosts = 2 3 4 5")) == "host_in_multiple_subnets");
  CHECK(rule_of(replace_once(text, "horizon = 50", "horizont = 50")) == "unknown_key");
  CHECK(rule_of(replace_once(text, "version = 1", "version = 9")) == "unsupported_version");
  CHECK(rule_of(replace_once(text, "horizon = 50", "horizon = fifty")) == "parse_error");
  CHECK(rule_of(replace_once(text, "actions = Sleep Monitor Analyse:3", "actions = Sleep Monitor Analyse:9")) ==
        "invalid_action");
  CHECK(rule_of(replace_once(text, "opserver_privileged = -3", "opserver_privileged = -0.5")) ==
        "reward_opserver_not_most_negative");
}

TEST_CASE("parse errors carry a line number") {
  const auto text = serialize_scenario(builtin_scenario("homogeneous"));
  try {
    load_scenario(replace_once(text, "horizon = 50", "horizon = fifty"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.line() == 9);
  }
}

TEST_CASE("pad_observation") {
  const std::vector<std::uint8_t> raw = {1, 0, 1, 1};
  const auto padded = pad_observation(raw, 10);
  CHECK(padded == ObservationVector{1, 0, 1, 1, 0, 0, 0, 0, 0, 0});
  CHECK(pad_observation(raw, 4) == ObservationVector(raw.begin(), raw.end()));
  CHECK_THROWS_AS(pad_observation(raw, 3), ContractViolation);
}

TEST_CASE("action text round-trips") {
  for (auto name : builtin_scenario_names())
    for (const auto& agent : builtin_scenario(name).agents)
      for (const auto& act : agent.action_space) CHECK(parse_action(to_string(act)) == act);
  CHECK_THROWS_AS(parse_action_kind("Launch"), ConfigError);
}
