#pragma once

#include <cstdint>
#include <string_view>

namespace gpdi {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stateless generator: value i depends only on (key, stream, i), never on
/// call order, so any parallel schedule reproduces the same draws.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::string_view label) noexcept
      : key_(mix64(seed ^ mix64(fnv1a(label)))) {}

  constexpr std::uint64_t at(std::uint64_t counter, std::uint64_t stream = 0) const noexcept {
    return mix64(mix64(key_ ^ (stream * 0xd1b54a32d192ed03ULL)) + counter * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform integer in [0, bound) by multiply-high reduction.
  std::uint64_t below(std::uint64_t bound, std::uint64_t counter, std::uint64_t stream = 0) const noexcept {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(at(counter, stream)) * bound) >> 64);
  }

  /// Uniform double in [0, 1).
  double unit(std::uint64_t counter, std::uint64_t stream = 0) const noexcept {
    return static_cast<double>(at(counter, stream) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

}  // namespace gpdi
