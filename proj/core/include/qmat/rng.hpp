// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace qmat {

// SplitMix64 step; used to derive independent stream seeds from a master
// seed so trials and slots can be generated in any order.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic sub-seed for a (label, index) pair under a master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t label,
                                 std::uint64_t index) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= label * 0xff51afd7ed558ccdULL;
  std::uint64_t b = splitmix64(s);
  s ^= index * 0xc4ceb9fe1a85ec53ULL;
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
inline std::complex<double> complex_gaussian(Rng& rng, double variance = 1.0) {
  std::normal_distribution<double> g(0.0, std::sqrt(variance / 2.0));
  double re = g(rng);
  double im = g(rng);
  return {re, im};
}

}  // namespace qmat
