#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ebca/hopfield.hpp"
#include "ebca/matrix.hpp"
#include "ebca/numerics.hpp"
#include "ebca/rng.hpp"
#include "support/fd.hpp"

using namespace ebca;
using ebca::testing::fd_grad;
using ebca::testing::grad_rel_err;

namespace {

Vector random_state(Rng& rng, std::size_t d) {
  const Matrix m = rng.normal_matrix(1, d);
  return Vector(m.row(0).begin(), m.row(0).end());
}

Matrix as_row(std::span<const double> v) {
  return Matrix(1, v.size(), Vector(v.begin(), v.end()));
}

}  // namespace

TEST_CASE("energy gradient matches finite differences") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 2 + rng.uniform_index(5);
    const std::size_t n = 1 + rng.uniform_index(6);
    const PatternStore store(rng.normal_matrix(d, n), 0.5 + rng.uniform());
    const Vector zeta = random_state(rng, d);

    const Vector analytic = hopfield_energy_grad(zeta, store);
    const Matrix numeric = fd_grad(
        [&](const Matrix& z) { return hopfield_energy(z.row(0), store); },
        as_row(zeta));
    CHECK(grad_rel_err(as_row(analytic), numeric) < 1e-7);
  }
}

TEST_CASE("hopfield_update is the softmax-weighted pattern mixture") {
  Rng rng(7);
  const std::size_t d = 4, n = 5;
  const double beta = 1.3;
  const PatternStore store(rng.normal_matrix(d, n), beta);
  const Vector zeta = random_state(rng, d);

  Vector scores(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += store.patterns(i, j) * zeta[i];
    scores[j] = s;
  }
  const Vector w = softmax_scaled(scores, beta);
  Vector want(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < n; ++j) want[i] += store.patterns(i, j) * w[j];

  const Vector got = hopfield_update(zeta, store);
  for (std::size_t i = 0; i < d; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
}

TEST_CASE("gd step with unit rate lands on the fixed-point update") {
  Rng rng(23);
  const PatternStore store(rng.normal_matrix(6, 9), 2.0);
  const Vector zeta = random_state(rng, 6);
  const Vector full = hopfield_gd_step(zeta, store, 1.0);
  const Vector update = hopfield_update(zeta, store);
  for (std::size_t i = 0; i < zeta.size(); ++i)
    CHECK(std::abs(full[i] - update[i]) <= 1e-12);
}

TEST_CASE("iteration drives energy down and converges") {
  Rng rng(55);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t d = 3 + rng.uniform_index(6);
    const std::size_t n = 2 + rng.uniform_index(8);
    const PatternStore store(rng.normal_matrix(d, n), 1.0 + rng.uniform());
    Vector zeta = random_state(rng, d);

    double prev = hopfield_energy(zeta, store);
    double delta = 1.0;
    int iters = 0;
    while (delta > 1e-10 && iters < 2000) {
      const Vector next = hopfield_update(zeta, store);
      delta = 0.0;
      for (std::size_t i = 0; i < d; ++i)
        delta = std::max(delta, std::abs(next[i] - zeta[i]));
      zeta = next;
      const double e = hopfield_energy(zeta, store);
      CHECK(e <= prev + 1e-12);
      prev = e;
      ++iters;
    }
    CHECK(delta <= 1e-10);
  }
}

TEST_CASE("well-separated patterns are recovered from nearby starts") {
  const std::size_t d = 16;
  Matrix patterns(d, 3);
  Rng rng(9);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < d; ++i)
      patterns(i, j) = (rng.uniform() < 0.5 ? -1.0 : 1.0) * 3.0;
  const PatternStore store(patterns, 4.0);

  Vector start(d);
  for (std::size_t i = 0; i < d; ++i) start[i] = patterns(i, 1) + 0.05;
  Vector zeta = start;
  for (int it = 0; it < 50; ++it) zeta = hopfield_update(zeta, store);
  for (std::size_t i = 0; i < d; ++i)
    CHECK(zeta[i] == doctest::Approx(patterns(i, 1)).epsilon(1e-6));
}

TEST_CASE("attention_forward equals the row-softmax oracle") {
  Rng rng(31);
  const Matrix q = rng.normal_matrix(5, 4);
  const Matrix k = rng.normal_matrix(7, 4);
  const Matrix v = rng.normal_matrix(7, 3);
  const double beta = 1.0 / std::sqrt(4.0);

  const Matrix got = attention_forward(q, k, v, beta);
  const Matrix want = matmul(row_softmax(matmul_nt(q, k), beta), v);
  CHECK(max_abs_diff(got, want) <= 1e-12);
  CHECK(got.rows() == 5);
  CHECK(got.cols() == 3);
}

TEST_CASE("attention rows are convex mixtures of values") {
  Rng rng(77);
  const Matrix q = rng.normal_matrix(3, 2);
  const Matrix k = rng.normal_matrix(6, 2);
  Matrix v(6, 1);
  for (std::size_t i = 0; i < 6; ++i) v(i, 0) = static_cast<double>(i);
  const Matrix out = attention_forward(q, k, v, 0.8);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    CHECK(out(r, 0) >= 0.0);
    CHECK(out(r, 0) <= 5.0);
  }
}
