#pragma once

// Counter-based splittable random streams. A 64-bit experiment seed plus a
// stream name deterministically key an independent substream; draw i is a
// pure function of (key, i), so sequences are identical across platforms,
// thread schedules, and process restarts.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace fkan::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

class Stream {
 public:
  Stream(std::uint64_t seed, std::string_view name)
      : key_(mix64(mix64(seed + kGolden) ^ fnv1a64(name))) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform on the open interval (0, 1).
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller; two draws per sample, no cached state.
  double normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Named substream of a single experiment seed.
inline Stream substream(std::uint64_t seed, std::string_view name) {
  return Stream(seed, name);
}

}  // namespace fkan::rng
