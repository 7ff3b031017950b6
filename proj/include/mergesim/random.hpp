#pragma once

#include <cstdint>
#include <random>

namespace mergesim {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates nearby (seed, index) pairs
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 0x632be59bd9b4e019ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Independent deterministic stream for (episode seed, purpose, index).
// Purpose constants keep spawn draws and per-vehicle draws from aliasing.
inline Rng make_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
  return Rng(mix_seed(mix_seed(seed, purpose), index));
}

constexpr std::uint64_t kStreamSpawn = 0x51;
constexpr std::uint64_t kStreamVehicle = 0x52;

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace mergesim
