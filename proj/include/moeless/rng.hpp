// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace moeless {

// splitmix64 finalizer; used to mix structured keys into seed material.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Builds one deterministic stream per (seed, a, b, tag). Every randomized
// operation keys its own stream so results never depend on call order.
inline std::mt19937_64 keyed_engine(std::uint64_t seed, std::uint64_t a, std::uint64_t b,
                                    std::uint64_t tag) {
  std::uint64_t s = mix64(seed ^ mix64(a ^ mix64(b ^ mix64(tag))));
  return std::mt19937_64(s);
}

// Hand-rolled transforms on top of mt19937_64. std::*_distribution output is
// implementation-defined, which would break bit-reproducibility of traces and
// routing across standard libraries.
inline double uniform01(std::mt19937_64& eng) {
  return (eng() >> 11) * 0x1.0p-53;  // in [0, 1)
}

inline double rand_exponential(std::mt19937_64& eng, double rate) {
  double u;
  do {
    u = uniform01(eng);
  } while (u == 0.0);
  return -std::log(u) / rate;
}

inline double rand_normal(std::mt19937_64& eng) {
  // Box-Muller; one sample per call keeps the stream position predictable.
  double u1;
  do {
    u1 = uniform01(eng);
  } while (u1 == 0.0);
  const double u2 = uniform01(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

inline double rand_lognormal(std::mt19937_64& eng, double log_mean, double log_sigma) {
  return std::exp(log_mean + log_sigma * rand_normal(eng));
}

}  // namespace moeless
