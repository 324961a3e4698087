#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace cyberdef {

/// Derives an independent stream seed from a base seed and a list of stream
/// identifiers (splitmix64 finalizer chained over the inputs).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> stream);

/// Seeded random stream. The engine is std::mt19937_64; the distributions are
/// implemented here so that sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  double normal();
  double gumbel();

 private:
  std::mt19937_64 engine_;
};

}  // namespace cyberdef
