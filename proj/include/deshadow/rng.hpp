#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace deshadow {

/// Seeded random source with platform-independent draws.
///
/// std::mt19937_64 output is fully specified by the standard, but the
/// <random> distributions are not, so bounded integers and unit reals are
/// derived here from raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Engine for the `(seed, stream, counter)` triple. Samplers derive a
  /// fresh engine per step so that resuming only needs the counters.
  static Rng for_counter(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform01();

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Sampling streams; keep values stable, they are part of the determinism contract.
namespace streams {
inline constexpr std::uint64_t kEpochShuffle = 1;
inline constexpr std::uint64_t kCriticPair = 2;
inline constexpr std::uint64_t kReference = 3;
inline constexpr std::uint64_t kIdentity = 4;
inline constexpr std::uint64_t kPenaltyMix = 5;
inline constexpr std::uint64_t kPairOrder = 6;
}  // namespace streams

}  // namespace deshadow
