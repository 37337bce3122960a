#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "ebca/matrix.hpp"

namespace ebca {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream seed derived from (global seed, run index) so independent runs own
// disjoint deterministic streams.
inline std::uint64_t stream_seed(std::uint64_t global, std::uint64_t run) {
  return splitmix64(splitmix64(global) ^ splitmix64(run + 0x51b5c1a9e3779b97ULL));
}

// Deterministic RNG: mt19937_64 plus an explicit Box-Muller transform. No
// library distributions are used, so the draw sequence is fully pinned by
// this header on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t global, std::uint64_t run) : gen_(stream_seed(global, run)) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  std::size_t uniform_index(std::size_t n) { return gen_() % n; }

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = normal() * stddev;
    return m;
  }

  Vector normal_vector(std::size_t n, double stddev = 1.0) {
    Vector v(n);
    for (double& x : v) x = normal() * stddev;
    return v;
  }

 private:
  std::mt19937_64 gen_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace ebca
