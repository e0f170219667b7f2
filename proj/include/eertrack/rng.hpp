#pragma once

#include <cstdint>
#include <random>

namespace eertrack {

using Rng = std::mt19937_64;

/// Purpose-split random substreams; each consumer of randomness in an episode owns one.
enum class Stream : std::uint64_t {
  kTarget = 1,
  kMeasurement = 2,
  kFilter = 3,
  kPlanner = 4,
  kTraining = 5,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_stream(std::uint64_t seed, Stream s) {
  return Rng(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(s)));
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }
inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

}  // namespace eertrack
