#pragma once

#include <cstdint>

namespace mcdsim {

/// SplitMix64 finalizer. Used to expand one user seed into per-component
/// seeds and as a counter-based uniform source.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of `seed` (e.g. per input example).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

/// Uniform double in (0, 1] from the counter-th draw of stream `key`.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t bits = splitmix64(key ^ splitmix64(counter));
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

}  // namespace mcdsim
