#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace cyberdef {

enum class ActionKind : std::uint8_t { Sleep, Monitor, Analyse, Remove, Restore, Block, Unblock };

enum class TargetKind : std::uint8_t { None, Host, Subnet };

TargetKind target_kind(ActionKind kind);
std::string_view to_string(ActionKind kind);
/// Throws ConfigError("unknown_action") for unrecognized names.
ActionKind parse_action_kind(std::string_view name);

/// A defender action. `target` is a host id for Analyse/Remove/Restore, a
/// subnet id for Block/Unblock and -1 otherwise.
struct BlueAction {
  ActionKind kind = ActionKind::Sleep;
  int target = -1;

  friend bool operator==(const BlueAction&, const BlueAction&) = default;
};

/// "Sleep", "Analyse:2", "Block:0".
std::string to_string(const BlueAction& action);
BlueAction parse_action(std::string_view text);

/// True when the target field agrees with the action kind.
bool target_matches_kind(const BlueAction& action);

/// Team reward constants. Compromise entries are charged every step for every
/// host in that state; restore/analyse entries per action; block_cost for
/// every step a subnet is held blocked, offset by block_justified_discount on
/// steps where red holds a foothold inside that subnet.
struct RewardTable {
  double opserver_privileged = -3.0;
  double host_privileged = -1.0;
  double host_user = -0.1;
  double restore_cost = -1.0;
  double restore_opserver_cost = -3.0;
  double analyse_unnecessary_cost = 0.0;
  double block_cost = -0.3;
  double block_justified_discount = 0.3;

  friend bool operator==(const RewardTable&, const RewardTable&) = default;
};

}  // namespace cyberdef
