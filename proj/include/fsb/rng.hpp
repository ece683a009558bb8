#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace fsb {

// SplitMix64 (Steele, Lea, Flood). The stream, the seed mixer and the bounded
// draw below are fixed so that episodes and initializations can be
// reproduced bit-for-bit by other implementations.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return finalize(state_);
  }

  /// Uniform integer in [0, bound) by rejection: values below 2^64 mod bound
  /// are redrawn, the rest are reduced modulo bound.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  static constexpr std::uint64_t finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Derives a child seed from (seed, index): finalize(seed ^ finalize(index + golden)).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  return SplitMix64::finalize(seed ^ SplitMix64::finalize(index + 0x9E3779B97F4A7C15ULL));
}

/// Partial Fisher-Yates: after the call, items[0, count) is a uniform random
/// ordered selection without replacement. For i in [0, count) swap items[i]
/// with items[i + below(size - i)].
template <typename T>
void partial_shuffle(std::span<T> items, std::size_t count, SplitMix64& rng) {
  for (std::size_t i = 0; i < count && i < items.size(); ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(items.size() - i));
    std::swap(items[i], items[j]);
  }
}

}  // namespace fsb
