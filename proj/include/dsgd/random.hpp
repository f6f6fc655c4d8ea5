#pragma once

#include <cstdint>
#include <random>

namespace dsgd {

// Seedable pseudo-random source.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard (the 10000th draw from the default seed is 9981545732273789042).
// All derived draws (bounded integers, reals, normals) are computed here
// rather than through <random> distributions, whose algorithms are
// implementation-defined. Identical seeds therefore give identical streams on
// every conforming platform.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). Unbiased (Lemire's multiply-and-reject).
  std::uint64_t uniform_index(std::uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Pure function of (master, a, b) used to give every epoch / worker / sweep
// cell its own reproducible stream.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0);

}  // namespace dsgd
