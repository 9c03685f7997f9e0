#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace attrition {

/// Name of the normal-variate algorithm. Bump the suffix whenever the
/// stream produced by Rng::normal() changes.
inline constexpr std::string_view kNormalAlgorithm = "mt19937_64+marsaglia-polar/v1";

/// SplitMix64 finalizer. Used to derive independent per-replicate seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for replicate `index` of a job seeded with `base`.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// Reproducible random stream. mt19937_64 output is fixed by the standard;
/// the uniform and normal conversions below are ours, so the whole stream
/// is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer on [0, bound). Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via the Marsaglia polar method.
  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace attrition
