#pragma once

#include <cstdint>
#include <initializer_list>

namespace attnes {

enum class SeedDomain : std::uint64_t { Train = 1, Eval = 2, Modification = 3, Baseline = 4 };

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Order-sensitive 64-bit mix of a sequence of words.
constexpr std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words) {
  std::uint64_t h = 0x243F6A8885A308D3ULL;
  for (std::uint64_t w : words) h = splitmix64(h ^ splitmix64(w));
  return h;
}

/// Seed of one rollout. Train and eval seeds live in distinct domains, so they never
/// coincide by construction of the tag word.
constexpr std::uint64_t rollout_seed(std::uint64_t run_seed, SeedDomain domain,
                                     std::uint64_t generation, std::uint64_t individual,
                                     std::uint64_t rollout) {
  return mix_seed({run_seed, static_cast<std::uint64_t>(domain), generation, individual, rollout});
}

}  // namespace attnes
