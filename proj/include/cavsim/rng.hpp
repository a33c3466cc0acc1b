#pragma once

#include <cstdint>
#include <random>

namespace cavsim {

using Rng = std::mt19937_64;

/// Purpose tags for independent random streams derived from one run seed.
enum class Stream : std::uint64_t {
  kEnsemble = 1,
  kNoise = 2,
  kJitter = 3,
  kDetection = 4,
  kBackground = 5,
  kDark = 6,
  kShots = 7,
  kTelegraphSetup = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic substream keyed by (seed, purpose, index). Streams for
/// different keys are statistically independent, so results do not
/// depend on the order in which substreams are consumed.
inline Rng make_stream(std::uint64_t seed, Stream purpose, std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ index);
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace cavsim
