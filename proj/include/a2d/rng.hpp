#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace a2d {

/// SplitMix64 finalizer. Used to mix seeds, never as a generator on its own.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of a named stream: the stream name plus up to three counters are
/// folded into the master seed. Streams with different names or counters are
/// statistically independent, so consumers never perturb each other.
constexpr std::uint64_t stream_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t a = 0, std::uint64_t b = 0,
                                    std::uint64_t c = 0) noexcept {
  std::uint64_t s = mix64(master ^ fnv1a(name));
  s = mix64(s ^ mix64(a + 0x1000193ULL));
  s = mix64(s ^ mix64(b + 0x2000327ULL));
  s = mix64(s ^ mix64(c + 0x30004bbULL));
  return s;
}

/// Deterministic generator. Distributions are computed by hand from raw
/// 64-bit draws so streams are bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return static_cast<std::size_t>(x % bound);
  }

  /// Fisher-Yates shuffle.
  template <typename Range>
  void shuffle(Range& r) {
    const std::size_t n = std::size(r);
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = below(i);
      using std::swap;
      swap(r[i - 1], r[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

/// Master seed plus a name; hands out per-index generators.
struct StreamKey {
  std::uint64_t master = 0;
  std::string_view name;

  Rng at(std::uint64_t a = 0, std::uint64_t b = 0, std::uint64_t c = 0) const {
    return Rng(stream_seed(master, name, a, b, c));
  }
};

}  // namespace a2d
