#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace relhal {

// 64-bit FNV-1a; stable across platforms and runs.
std::uint64_t stable_hash(std::string_view s) noexcept;

// Derives an independent stream seed from a base seed and a salt.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

/// Seeded generator with platform-independent derived distributions.
///
/// The standard library distributions are implementation-defined, so every
/// sampling primitive the toolkit relies on for reproducible output is
/// written out here on top of mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n) by rejection sampling. n must be positive.
  std::size_t uniform_index(std::size_t n);

  // Uniform double in [0, 1) with 53 bits of resolution.
  double uniform01();

  // Standard normal draw (Box-Muller, one value per call).
  double gaussian();

  // Fisher-Yates from the back.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace relhal
