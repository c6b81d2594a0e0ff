#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace peakforge {

/// SplitMix64 finalizer; used to key independent RNG streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

/// Derives one seed from (master, purpose, index). Streams with distinct keys
/// are independent, which is what makes per-trial replay exact on resume.
constexpr std::uint64_t keyed_seed(std::uint64_t master, std::uint64_t purpose,
                                   std::uint64_t index) {
  return mix_seed(mix_seed(master, purpose), index);
}

/// Deterministic RNG with portable output. The engine (mt19937_64) is fully
/// specified by the standard; the distribution transforms below are explicit
/// so results do not depend on the standard library's <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer on [lo, hi], inclusive, unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<std::int64_t>(eng_());  // full span
    const std::uint64_t bound = UINT64_MAX - (UINT64_MAX % range);
    std::uint64_t x = eng_();
    while (x >= bound) x = eng_();
    return lo + static_cast<std::int64_t>(x % range);
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
  }

  /// Standard normal via Box-Muller (pair cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline Rng keyed_rng(std::uint64_t master, std::uint64_t purpose, std::uint64_t index) {
  return Rng(keyed_seed(master, purpose, index));
}

}  // namespace peakforge
