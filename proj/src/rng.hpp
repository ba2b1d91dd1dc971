#pragma once
#include <cstdint>
#include <cmath>
#include "units.hpp"

namespace mdd {

// Counter-based randomness: every draw is a pure function of
// (seed, stream, index-a, index-b). No generator state exists, so any
// subset of trajectories reproduces identical values in any execution
// order and under any worker count.

// splitmix64 finalizer (public-domain avalanche function)
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ull);
  h = mix64(h ^ stream);
  h = mix64(h ^ a);
  return mix64(h ^ b);
}

// strictly inside (0,1); 53 significant bits
inline double bits_to_u01(std::uint64_t bits) {
  return static_cast<double>((bits >> 11) + 1) * (1.0 / 9007199254740994.0);
}

inline double uniform01(std::uint64_t seed, std::uint64_t stream,
                        std::uint64_t a, std::uint64_t b) {
  return bits_to_u01(counter_hash(seed, stream, a, b));
}

// Box-Muller from two independent counter draws
inline double std_normal(std::uint64_t seed, std::uint64_t stream,
                         std::uint64_t a, std::uint64_t b) {
  double u1 = bits_to_u01(counter_hash(seed, stream, a, b));
  double u2 = bits_to_u01(counter_hash(seed ^ 0x5851f42d4c957f2dull, stream, a, b));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

} // namespace mdd
