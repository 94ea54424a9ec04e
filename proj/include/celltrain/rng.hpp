#pragma once

#include <cstdint>
#include <random>

namespace celltrain {

// Deterministic RNG used throughout the project. Doubles are produced
// directly from the mt19937_64 bit stream instead of std distributions,
// whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo is fine here; n is tiny relative to 2^64.
    return n == 0 ? 0 : eng_() % n;
  }

  // Derive an independent stream, e.g. one per trajectory or worker.
  static std::uint64_t derive(std::uint64_t master, std::uint64_t index) {
    // SplitMix64 finalizer over the pair.
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace celltrain
