#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace maes {

// Deterministic seed derivation. Every stochastic component (sample stream,
// weight init, validation draws, per-batch eval seeds) gets its own stream
// derived from (root seed, label, index) so that adding a consumer never
// shifts another consumer's stream.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(root ^ fnv1a(label)) ^ index);
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view label,
                                std::uint64_t index = 0) {
  return std::mt19937_64(derive_seed(root, label, index));
}

}  // namespace maes
