#pragma once

#include <cstdint>
#include <vector>

#include "cyberdef/scenario.hpp"

namespace cyberdef::netsim {

struct BruteForceResult {
  double value = 0.0;
  /// One maximizing joint-action sequence (first found in enumeration order).
  std::vector<std::vector<BlueAction>> best_sequence;
  /// Number of distinct (depth, state) nodes expanded.
  std::uint64_t nodes_expanded = 0;
};

/// Exact best total team reward over all joint-action sequences of length
/// `horizon`, with red exploits pinned to always succeed. Refuses with
/// ConfigError("budget_exceeded") when |joint actions|^horizon > budget.
BruteForceResult brute_force_value(const Scenario& scenario, int horizon, double budget = 1e7);

enum class BaselinePolicy { AllSleep, UniformRandom };

/// Episode returns of a scripted baseline. Episode e runs on environment
/// seed derive_seed(seed, {e}); random actions draw from a separate stream.
std::vector<double> baseline_returns(const Scenario& scenario, BaselinePolicy policy, int episodes,
                                     std::uint64_t seed);

}  // namespace cyberdef::netsim
