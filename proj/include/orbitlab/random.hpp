#pragma once

// Counter-based uniforms: the value for (seed, index, draw) does not depend on
// evaluation order, so parallel sampling reproduces serial sampling exactly.

#include <cstdint>

namespace orbitlab {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t seed) : key_(splitmix64(seed ^ 0x6f72626974ULL)) {}

  constexpr std::uint64_t bits(std::uint64_t index, std::uint64_t draw) const {
    return splitmix64(splitmix64(key_ + index) ^ (draw * 0xd1b54a32d192ed03ULL));
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t index, std::uint64_t draw) const {
    return static_cast<double>(bits(index, draw) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

}  // namespace orbitlab
