#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cyberdef/logs.hpp"

namespace cyberdef::replay {

struct Divergence {
  long long episode = 0;
  int step = 0;
  int line = 0;
  double logged = 0.0;
  double replayed = 0.0;
  std::string reason;
};

struct Report {
  int episodes = 0;
  long long steps = 0;
  std::optional<Divergence> first_divergence;
};

/// Re-executes every logged joint action through the simulator from the
/// logged environment seed and compares each step reward for exact equality.
/// Stops at the first divergence.
Report replay(const logs::ActionLog& log);

/// A firewall Block on a red-occupied subnet shortly after a subnet agent's
/// first detection. Steps are 0-based; the detection is visible in the
/// observation that follows step `detection_step`.
struct BlockResponse {
  long long episode = 0;
  int agent = 0;
  int detection_step = 0;
  int block_step = 0;
  int subnet = 0;
};

struct ResponseQuery {
  int episodes = 0;
  int episodes_with_response = 0;
  std::vector<BlockResponse> responses;
};

/// Replays every episode and, for each agent without Block actions, finds
/// the first step after which one of its visible hosts is known compromised.
/// A response is a Block issued by an agent that has Block actions, on a
/// subnet red occupied when the action was taken, within `window` steps
/// after that detection.
ResponseQuery query_block_responses(const logs::ActionLog& log, int window = 3);

}  // namespace cyberdef::replay
