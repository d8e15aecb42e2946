#pragma once

// Counter-based randomness: every draw is a pure function of
// (master seed, sample index, step index), so paths replay identically under
// any worker schedule.

#include <cstdint>

namespace rwg {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-sample stream key derived from the master seed.
inline constexpr std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0,1) for draw `step` of the stream `seed`.
inline constexpr double uniform01(std::uint64_t seed, std::uint64_t step) {
  std::uint64_t x = splitmix64(seed ^ splitmix64(step));
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace rwg
