#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace stdml {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed from a parent seed and a path of integer tags. Independent of
/// scheduling, so parallel and serial runs consume identical streams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) noexcept {
  std::uint64_t s = mix64(seed);
  for (auto t : tags) s = mix64(s ^ mix64(t + 0x632be59bd9b4e019ULL));
  return s;
}

inline double std_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Draw from N(mean, 1) restricted to (0, inf) when `positive`, else (-inf, 0].
/// Exponential-proposal rejection for tails (Robert 1995), plain rejection otherwise.
inline double truncated_normal(Rng& rng, double mean, bool positive) {
  // Reduce to x ~ N(0,1) restricted to x > a.
  const double a = positive ? -mean : mean;
  double x;
  if (a <= 0.0) {
    do {
      x = std_normal(rng);
    } while (x <= a);
  } else {
    const double lam = 0.5 * (a + std::sqrt(a * a + 4.0));
    std::exponential_distribution<double> expo(lam);
    for (;;) {
      x = a + expo(rng);
      const double u = uniform01(rng);
      if (u <= std::exp(-0.5 * (x - lam) * (x - lam))) break;
    }
  }
  return positive ? mean + x : mean - x;
}

/// Chi-squared draw with `df` degrees of freedom.
inline double chi_squared(Rng& rng, double df) {
  return std::chi_squared_distribution<double>(df)(rng);
}

}  // namespace stdml
