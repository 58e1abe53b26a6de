#pragma once

#include <cstdint>

namespace nhmc {

/// Stateless uniform draws keyed by (seed, path index, step index).
///
/// Each key is mixed with the SplitMix64 finalizer, so any draw can be
/// regenerated without replaying a stream and results do not depend on
/// how paths are scheduled across threads.
class CounterRng {
 public:
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  constexpr CounterRng(std::uint64_t seed, std::uint64_t path) noexcept
      : key_(mix(mix(seed + 0x9E3779B97F4A7C15ULL) ^
                 (path * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL))) {}

  constexpr std::uint64_t bits(std::uint64_t step) const noexcept {
    return mix(key_ + (step + 1) * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t step) const noexcept {
    return static_cast<double>(bits(step) >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t key_;
};

}  // namespace nhmc
