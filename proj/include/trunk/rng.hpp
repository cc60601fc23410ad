#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "trunk/hash.hpp"

namespace trunk {

namespace detail {
inline uint64_t& global_seed_ref() {
  static uint64_t seed = 0;
  return seed;
}
inline std::mt19937_64& global_engine_ref() {
  static std::mt19937_64 eng(0);
  return eng;
}
}  // namespace detail

// Seeds every random source the artifact draws from. Must run before any
// worker threads spawn. Two processes calling seed_all(s) and executing the
// same operation sequence draw identical values.
inline void seed_all(uint64_t seed) {
  detail::global_seed_ref() = seed;
  detail::global_engine_ref().seed(seed);
}

inline uint64_t global_seed() { return detail::global_seed_ref(); }

// Default stream; shared, ordering-sensitive. Prefer named_stream() inside
// training so sibling nodes do not perturb each other's draws.
inline std::mt19937_64& global_rng() { return detail::global_engine_ref(); }

// Independent engine derived from (global seed, tag). Same (seed, tag)
// always yields the same sequence regardless of what other streams did.
inline std::mt19937_64 named_stream(const std::string& tag) {
  uint64_t mixed = detail::global_seed_ref() ^ fnv1a64(tag);
  // splitmix-style scramble so nearby seeds decorrelate
  mixed += 0x9e3779b97f4a7c15ull;
  mixed = (mixed ^ (mixed >> 30)) * 0xbf58476d1ce4e5b9ull;
  mixed = (mixed ^ (mixed >> 27)) * 0x94d049bb133111ebull;
  mixed = mixed ^ (mixed >> 31);
  return std::mt19937_64(mixed);
}

}  // namespace trunk
