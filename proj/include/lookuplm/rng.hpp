#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace lookuplm {

// Deterministic uniform draws. std::uniform_real_distribution is
// implementation-defined, so values are mapped from raw engine bits instead;
// mt19937_64 itself is pinned by the standard, which keeps every seeded draw
// bit-reproducible across builds and platforms.
class UniformRng {
 public:
  explicit UniformRng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  float next_uniform(float lo, float hi) {
    return lo + static_cast<float>(next_unit()) * (hi - lo);
  }

  std::uint64_t next_u64() { return engine_(); }

  // Bounded draw for shuffles; modulo bias is irrelevant at corpus scales
  // but rejection keeps the result exact.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  // Decorrelated child seed for a named stream (splitmix64 finalizer).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
void shuffle_in_place(std::vector<T>& items, UniformRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace lookuplm
