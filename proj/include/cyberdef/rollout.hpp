#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cyberdef/commgraph.hpp"
#include "cyberdef/netsim.hpp"
#include "cyberdef/policy.hpp"

namespace cyberdef::train {

using nn::Matrix;

/// Running statistics for value targets: exponential moving averages of the
/// first two moments with bias correction. Disabled = identity.
struct ValueNormalizer {
  bool enabled = true;
  double beta = 0.999;
  double running_mean = 0.0;
  double running_mean_sq = 0.0;
  double debias = 0.0;

  void update(std::span<const double> targets);
  double mean() const;
  double stddev() const;
  double normalize(double x) const;
  double denormalize(double x) const;
};

/// One episode of experience. Per-agent arrays are step-major, agent-minor.
struct RolloutBuffer {
  int horizon = 0;
  int n_agents = 0;
  std::uint64_t env_seed = 0;
  long long iteration = 0;
  Matrix obs;                                      // (horizon * N) x obs_len
  std::vector<int> actions;                        // horizon * N
  std::vector<double> log_probs;                   // horizon * N
  std::vector<double> values;                      // horizon * N, denormalized
  std::vector<double> rewards;                     // horizon
  std::vector<std::uint8_t> dones;                 // horizon
  std::vector<std::vector<BlueAction>> joint_actions;  // horizon
  graph::MaskSample mask;
  double total_reward = 0.0;

  int length() const { return static_cast<int>(rewards.size()); }
};

/// Runs one episode: the given mask is used at every step, actions are
/// decoded from `policy` (sampled or greedy) and the environment is seeded
/// with `env_seed`.
RolloutBuffer collect_episode(const Scenario& scenario, const policy::Policy& policy, const graph::MaskSample& mask,
                              const ValueNormalizer& vnorm, std::uint64_t env_seed, Rng& action_rng,
                              policy::DecodeMode mode = policy::DecodeMode::Sample);

struct Advantages {
  std::vector<double> advantages;  // horizon * N
  std::vector<double> returns;     // horizon * N
};

/// Lambda-returns G_t = r_t + gamma ((1 - lambda) V_{t+1} + lambda G_{t+1})
/// per agent against the shared team reward, cut at episode end; the
/// advantage is G_t - V_t (equal to generalized advantage estimation).
Advantages compute_returns(const RolloutBuffer& buffer, double gamma, double gae_lambda);

/// Mean 0, standard deviation 1 (population, epsilon 1e-8).
void normalize_advantages(std::vector<double>& advantages);

}  // namespace cyberdef::train
