#include "cyberdef/actions.hpp"

#include <array>
#include <charconv>

#include "cyberdef/errors.hpp"

namespace cyberdef {

namespace {

constexpr std::array<std::string_view, 7> kNames = {"Sleep",   "Monitor", "Analyse", "Remove",
                                                    "Restore", "Block",   "Unblock"};

}  // namespace

TargetKind target_kind(ActionKind kind) {
  switch (kind) {
    case ActionKind::Analyse:
    case ActionKind::Remove:
    case ActionKind::Restore:
      return TargetKind::Host;
    case ActionKind::Block:
    case ActionKind::Unblock:
      return TargetKind::Subnet;
    case ActionKind::Sleep:
    case ActionKind::Monitor:
      break;
  }
  return TargetKind::None;
}

std::string_view to_string(ActionKind kind) { return kNames[static_cast<std::size_t>(kind)]; }

ActionKind parse_action_kind(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<ActionKind>(i);
  throw ConfigError("unknown_action", "unknown action kind '" + std::string(name) + "'");
}

std::string to_string(const BlueAction& action) {
  std::string out(to_string(action.kind));
  if (target_kind(action.kind) != TargetKind::None) out += ":" + std::to_string(action.target);
  return out;
}

BlueAction parse_action(std::string_view text) {
  BlueAction action;
  const auto colon = text.find(':');
  action.kind = parse_action_kind(text.substr(0, colon));
  if (colon != std::string_view::npos) {
    const auto digits = text.substr(colon + 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), action.target);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty())
      throw ConfigError("invalid_action_target", "bad target in action '" + std::string(text) + "'");
  }
  if (!target_matches_kind(action))
    throw ConfigError("invalid_action_target",
                      "target does not match action kind in '" + std::string(text) + "'");
  return action;
}

bool target_matches_kind(const BlueAction& action) {
  return target_kind(action.kind) == TargetKind::None ? action.target == -1 : action.target >= 0;
}

}  // namespace cyberdef
