#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace saeb {

using Rng = std::mt19937_64;

/// Thread-safe log|Gamma(x)| (std::lgamma writes the global signgam).
inline double log_gamma(double x) {
  int sign = 0;
  return ::lgamma_r(x, &sign);
}

/// log(1 + e^x) without overflow.
inline double log1pexp(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// log C(m, y).
inline double log_choose(double m, double y) {
  return log_gamma(m + 1) - log_gamma(y + 1) - log_gamma(m - y + 1);
}

/// log(sum exp(v)), stabilised by the maximum; -inf for an empty range.
double log_sum_exp(std::span<const double> v);

/// SplitMix64 finaliser, used to decorrelate seeds derived from a base seed.
std::uint64_t splitmix64(std::uint64_t x);

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}
inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace saeb
