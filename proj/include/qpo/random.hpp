#pragma once

#include <cstdint>
#include <random>

namespace qpo {

using Seed = std::uint64_t;

/// SplitMix64 finalizer. Used only to derive independent sub-seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for stream `index` of `parent`.
constexpr Seed derive_seed(Seed parent, std::uint64_t index) {
  return mix64(mix64(parent) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

constexpr Seed derive_seed(Seed parent, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(parent, a), b);
}

/// Random stream for simulation. Wraps mt19937_64 (fully specified by the
/// standard) and draws doubles from the top 53 bits so a seed reproduces the
/// same sequence on every standard library.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace qpo
