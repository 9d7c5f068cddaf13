#pragma once

#include <cstdint>
#include <random>

namespace pmm {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-chain seeds from a
/// base seed so parallel replicates are reproducible.
inline std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t stream) {
  std::uint64_t z = base_seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double draw_std_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

/// Chi-square draw as gamma(df/2, scale 2).
inline double draw_chisq(double df, Rng& rng) {
  std::gamma_distribution<double> g(df / 2.0, 2.0);
  return g(rng);
}

/// Gamma draw in shape-scale parameterization.
inline double draw_gamma(double shape, double scale, Rng& rng) {
  std::gamma_distribution<double> g(shape, scale);
  return g(rng);
}

}  // namespace pmm
