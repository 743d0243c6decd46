#pragma once

#include <cstdint>
#include <random>

namespace lkh {

// Finalizer from the splitmix64 generator. Good avalanche, cheap, and easy
// to restate in a report so runs can be reproduced outside this codebase.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stream-splitting rule used everywhere a base seed fans out into
// independent streams (replications within a run, cells within a sweep):
//
//   seed(base, index) = splitmix64(base + (index + 1) * 0x9e3779b97f4a7c15)
//
// Report metadata repeats this formula verbatim.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(base + (index + 1) * 0x9e3779b97f4a7c15ull);
}

// mt19937_64 with hand-rolled double conversion. The engine's output
// sequence is fixed by the C++ standard and the conversion below avoids
// std::uniform_real_distribution (whose algorithm is implementation
// defined), so a seed yields identical draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // 53-bit mantissa uniform in [0, 1).
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Unbiased uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~0ull - ~0ull % n;
    for (;;) {
      const std::uint64_t x = gen_();
      if (x < limit) return x % n;
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace lkh
