#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace genrestat {

using Rng = std::mt19937_64;

// splitmix64 finaliser; derives independent child seeds from (seed, index)
// so parallel work items reproduce the serial schedule.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return mix_seed(mix_seed(seed, a), b);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Beta(alpha, alpha) draw. Gamma variates are taken in log space via
// G(a) = G(a + 1) * U^(1/a), which stays finite for alpha close to zero.
inline double sample_symmetric_beta(double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
  auto log_gamma = [&] {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    return std::log(gamma(rng)) + std::log(u) / alpha;
  };
  const double a = log_gamma();
  const double b = log_gamma();
  return 1.0 / (1.0 + std::exp(b - a));
}

}  // namespace genrestat
