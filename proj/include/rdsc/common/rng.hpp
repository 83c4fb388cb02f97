#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace rdsc {

/// Platform-independent random stream.
///
/// std::mt19937_64 has a fully specified output sequence; the standard
/// distributions do not, so every draw used by the library goes through the
/// helpers below instead of <random> distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound). Rejection sampling, no modulo bias.
  std::uint64_t uniform_below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed splitting: derive_seed(global, {stream, index, ...}) folds each tag
/// into the running state with mix64. Distinct tag paths give independent
/// streams, and the result depends only on the values, never on call order
/// elsewhere in the program.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = mix64(seed);
  for (std::uint64_t t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

/// Stream tags used with derive_seed across the harness.
namespace stream {
inline constexpr std::uint64_t kImage = 1;
inline constexpr std::uint64_t kAttack = 2;
inline constexpr std::uint64_t kArms = 3;
inline constexpr std::uint64_t kTrain = 4;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kNaive = 7;
}  // namespace stream

}  // namespace rdsc
