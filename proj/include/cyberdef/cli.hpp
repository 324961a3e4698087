#pragma once

#include <iosfwd>

namespace cyberdef::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitDivergence = 3;

/// Entry point of the command-line tool (train, eval, replay, emit-curves).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cyberdef::cli
