#pragma once

#include <cstdint>

namespace satrestore {

// Counter-based generator: the n-th draw is a pure function of (key, n), so a
// stream is reproducible regardless of threading, and substreams derived from
// the same seed are independent by key separation. Integer draws are
// bit-identical across platforms; gaussian() additionally depends on libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kSeedTag)), counter_(0) {}

  // Independent stream addressed by index; deterministic in (seed, index).
  Rng substream(std::uint64_t index) const {
    return Rng(mix(key_ ^ mix(index ^ kStreamTag)), 0);
  }

  std::uint64_t next_u64() {
    const std::uint64_t c = counter_++;
    return mix(key_ + c * 0x9E3779B97F4A7C15ull);
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_open() { return 1.0 - uniform(); }

  // Standard normal via Box-Muller (one draw per call, two uniforms consumed).
  double gaussian();

 private:
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  static constexpr std::uint64_t kSeedTag = 0xA02B4C5D6E7F8091ull;
  static constexpr std::uint64_t kStreamTag = 0x3C69F02D8E157BA4ull;

  // SplitMix64 finalizer: invertible 64-bit mix with full avalanche.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace satrestore
