// Prints the frozen reference values used by the test suite.
#include <cmath>
#include <cstdio>

#include "cyberdef/oracle.hpp"
#include "cyberdef/trainer.hpp"

using namespace cyberdef;

int main() {
  constexpr std::uint64_t kSeed = 20240;
  for (const char* name : {"homogeneous", "heterogeneous", "host_based"}) {
    const auto s = builtin_scenario(name);
    for (auto p : {netsim::BaselinePolicy::AllSleep, netsim::BaselinePolicy::UniformRandom}) {
      const auto r = netsim::baseline_returns(s, p, 1000, kSeed);
      const auto [mean, sd] = train::mean_std(r);
      std::printf("%s %s mean=%.17g std=%.17g\n", name, p == netsim::BaselinePolicy::AllSleep ? "all_sleep" : "random",
                  mean, sd);
    }
  }
  const auto micro = netsim::brute_force_value(builtin_scenario("micro"), 4);
  std::printf("micro brute_force=%.17g nodes=%llu\n", micro.value, static_cast<unsigned long long>(micro.nodes_expanded));
  for (const auto& joint : micro.best_sequence) {
    for (const auto& a : joint) std::printf("%s ", to_string(a).c_str());
    std::printf("\n");
  }
}
