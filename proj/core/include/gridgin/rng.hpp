#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace gridgin {

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; a bijective 64-bit mix.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stable sub-seed for (master, tags...). Every random stream in the library
/// is derived this way so results never depend on scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master,
                                    std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t h = mix64(master);
  for (std::uint64_t t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

/// Stream tags so that distinct pipeline stages never share a seed.
enum class SeedStream : std::uint64_t {
  Generate = 1,
  Augment = 2,
  Split = 3,
  LabelPlan = 4,
  ModelInit = 5,
  Shuffle = 6,
  Permutation = 7,
};

constexpr std::uint64_t derive_seed(std::uint64_t master, SeedStream stream,
                                    std::uint64_t index = 0) noexcept {
  return derive_seed(master, {static_cast<std::uint64_t>(stream), index});
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace gridgin
