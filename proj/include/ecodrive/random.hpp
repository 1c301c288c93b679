#pragma once

#include <cstdint>
#include <random>

namespace ecodrive {

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) from the top 53 bits. Unlike
/// std::uniform_real_distribution the mapping is fixed across standard
/// libraries, so seeded outputs are portable.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform integer in [lo, hi]; modulo bias is negligible for small ranges.
inline std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(rng() % span);
}

/// Counter-based hash (splitmix64 finalizer). Lets per-item random decisions
/// stay independent of iteration order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace ecodrive
