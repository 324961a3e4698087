#pragma once

#include <cstdint>

// Frozen reference values, computed once by tools/compute_fixtures.cpp
// (1000 episodes, seed 20240) before the learner existed.
namespace fixtures {

inline constexpr std::uint64_t kBaselineSeed = 20240;
inline constexpr int kBaselineEpisodes = 1000;

// All-Sleep is deterministic: the default scenarios only randomize detection.
inline constexpr double kAllSleepMean = -211.29999999999686;

inline constexpr double kRandomMeanHomogeneous = -122.39360000000011;
inline constexpr double kRandomStdHomogeneous = 31.657181792446433;
inline constexpr double kRandomMeanHeterogeneous = -119.18240000000003;
inline constexpr double kRandomStdHeterogeneous = 26.015672396461351;
inline constexpr double kRandomMeanHostBased = -176.30909999999997;
inline constexpr double kRandomStdHostBased = 12.725625610947404;

// Exhaustive optimum of the micro scenario, horizon 4, exploits pinned to succeed.
inline constexpr double kMicroBruteForce = -0.20000000000000001;

}  // namespace fixtures
