#pragma once

// Counter-based seeding. Every random stream in the library is derived from
// (master seed, tag, indices) so results do not depend on the order or the
// thread on which streams are consumed.

#include <cstdint>
#include <initializer_list>
#include <random>

namespace odcp {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Hashes a seed and a list of stream coordinates into one 64-bit key.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> coords) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
  return h;
}

inline std::mt19937_64 make_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> coords) {
  return std::mt19937_64(derive_seed(seed, coords));
}

/// Stream tags; kept distinct so that, e.g., the permutation oracle never
/// replays the random-subset draws.
namespace stream_tag {
inline constexpr std::uint64_t random_subset = 0x5u;
inline constexpr std::uint64_t single_subset = 0x6u;
inline constexpr std::uint64_t full_permutation = 0x7u;
inline constexpr std::uint64_t segment = 0x10u;
inline constexpr std::uint64_t preset = 0x11u;
inline constexpr std::uint64_t coordinates = 0x12u;
}  // namespace stream_tag

}  // namespace odcp
