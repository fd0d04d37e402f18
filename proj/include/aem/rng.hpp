#pragma once

#include <cstdint>
#include <random>

namespace aem {

// Single seedable random source. Every piece of randomness in the pipeline is
// drawn from an Rng that the caller passes in; there is no global state.
struct Rng {
  std::mt19937_64 engine;

  explicit Rng(std::uint64_t seed) : engine(seed) {}

  double uniform() {  // [0, 1)
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine);
  }

  double normal() {
    return std::normal_distribution<double>(0.0, 1.0)(engine);
  }

  double gamma(double shape) {
    return std::gamma_distribution<double>(shape, 1.0)(engine);
  }

  std::uint64_t next_u64() { return engine(); }

  // 0 <= result < n
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine);
  }

  // Deterministic child seed for an independent stream.
  std::uint64_t fork_seed(std::uint64_t stream) {
    return engine() ^ (stream * 0x9e3779b97f4a7c15ULL);
  }
};

}  // namespace aem
