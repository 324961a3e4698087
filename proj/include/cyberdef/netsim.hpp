#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cyberdef/random.hpp"
#include "cyberdef/scenario.hpp"

namespace cyberdef::netsim {

enum class Access : std::uint8_t { None, User, Privileged };
enum class Knowledge : std::uint8_t { Unknown, Clean, User, Privileged };

/// Events raised on a host during the current step; cleared at the start of
/// every step.
struct EventFlags {
  bool scan_seen = false;
  bool exploit_alert = false;

  friend bool operator==(const EventFlags&, const EventFlags&) = default;
};

struct HostState {
  int host_id = 0;
  int subnet_id = 0;
  bool is_op_server = false;
  Access red_access = Access::None;
  EventFlags event_flags;
  Knowledge known_compromise = Knowledge::Unknown;
  /// Highest access red has held since the last Restore (bookkeeping for the
  /// detection invariant; never observed by agents).
  Access peak_access = Access::None;
  /// Red gained User here this step; consumed by detection sampling.
  bool exploited_this_step = false;

  friend bool operator==(const HostState&, const HostState&) = default;
};

struct SubnetState {
  int subnet_id = 0;
  bool blocked = false;

  friend bool operator==(const SubnetState&, const SubnetState&) = default;
};

enum class RedStage : std::uint8_t { ScanSubnet, ScanHost, Exploit, Escalate, Pivot, Impact };

struct RedState {
  RedStage stage = RedStage::ScanSubnet;
  int target_host = -1;
  /// Position of target_host on the attack path.
  int path_index = 0;
  int retry_count = 0;

  friend bool operator==(const RedState&, const RedState&) = default;
};

struct Foothold {
  int host_id;
  Access level;

  friend bool operator==(const Foothold&, const Foothold&) = default;
};

struct NetworkState {
  std::vector<HostState> hosts;
  std::vector<SubnetState> subnets;
  RedState red;
  int step = 0;
  bool done = false;

  /// Hosts where red currently holds User or Privileged access.
  std::vector<Foothold> footholds() const;
  bool red_in_subnet(int subnet_id) const;

  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

/// What red did this step. `target` is a host for host-level stages and a
/// subnet for ScanSubnet/Pivot.
struct RedAction {
  RedStage stage = RedStage::ScanSubnet;
  int target = -1;
  bool success = false;

  friend bool operator==(const RedAction&, const RedAction&) = default;
};

struct ResolvedBlueAction {
  int agent = 0;
  BlueAction action;
  double cost = 0.0;
};

enum class EventKind : std::uint8_t { ScanSeen, ExploitAlert, ExploitMissed };

struct Event {
  EventKind kind;
  int host;
};

/// One itemized contribution to the team reward.
struct RewardItem {
  std::string label;
  int subject = -1;  // host, subnet or agent the entry refers to
  double amount = 0.0;
};

struct StepInfo {
  std::vector<ResolvedBlueAction> blue;
  RedAction red;
  std::vector<Event> events;
  std::vector<RewardItem> reward_items;
};

struct StepResult {
  NetworkState next_state;
  std::vector<ObservationVector> joint_obs;
  double team_reward = 0.0;
  bool done = false;
  StepInfo info;
};

struct ResetResult {
  NetworkState state;
  std::vector<ObservationVector> joint_obs;
};

/// Probability that an automatic monitor raises an alert for a fresh exploit.
inline constexpr double kAlertProbability = 0.5;

/// Clean initial state. Validates the scenario (ConfigError on failure).
ResetResult reset(const Scenario& scenario);

/// Stream seed for an environment episode.
inline Rng environment_rng(std::uint64_t seed) { return Rng(derive_seed(seed, {0x656e76})); }

/// Advances one step: blue actions in ascending agent index, red action,
/// detection sampling, reward, step increment. Throws ContractViolation on
/// an action outside an agent's space or when the episode is over.
StepResult step(const Scenario& scenario, const NetworkState& state, std::span<const BlueAction> joint_action,
                Rng& rng);

/// Applies one defender action in place and returns its immediate cost.
/// `charged_block` (size = subnet count) marks subnets whose block cost was
/// settled by the action this step.
double apply_blue(const Scenario& scenario, NetworkState& state, int agent_id, const BlueAction& action,
                  std::vector<bool>* charged_block = nullptr);

/// The scripted attacker's action for this step, applied in place.
RedAction red_step(const Scenario& scenario, NetworkState& state, Rng& rng);

/// Samples exploit alerts for this step's fresh exploits.
std::vector<Event> sample_detection(NetworkState& state, Rng& rng);

/// Raw (unpadded) observation bits for one agent.
ObservationVector observe_raw(const NetworkState& state, const AgentSpec& agent);
/// Observation padded to the scenario-wide length.
ObservationVector observe(const NetworkState& state, const AgentSpec& agent);
std::vector<ObservationVector> observe_all(const Scenario& scenario, const NetworkState& state);

struct RewardBreakdown {
  double total = 0.0;
  std::vector<RewardItem> items;
};

/// Compromise penalties on `next_state`, the already-resolved action costs
/// and standing block charges for subnets not settled by an action this step.
RewardBreakdown compute_reward(const Scenario& scenario, const NetworkState& next_state,
                               std::span<const ResolvedBlueAction> actions, const std::vector<bool>& charged_block);

/// The hosts red attacks, in order.
std::vector<int> attack_path(const Scenario& scenario);

/// Convenience wrapper owning state and random stream.
class Environment {
 public:
  Environment(const Scenario& scenario, std::uint64_t seed);

  const std::vector<ObservationVector>& reset(std::uint64_t seed);
  StepResult step(std::span<const BlueAction> joint_action);

  const NetworkState& state() const { return state_; }
  const Scenario& scenario() const { return *scenario_; }
  const std::vector<ObservationVector>& observations() const { return obs_; }

 private:
  const Scenario* scenario_;
  NetworkState state_;
  std::vector<ObservationVector> obs_;
  Rng rng_;
};

std::string to_string(RedStage stage);

}  // namespace cyberdef::netsim
