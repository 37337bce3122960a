#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ebca/ebcq.hpp"
#include "ebca/hopfield.hpp"
#include "ebca/matrix.hpp"
#include "ebca/numerics.hpp"
#include "ebca/rng.hpp"

using namespace ebca;

namespace {

double naive_query_energy(const Matrix& q, const Matrix& keys, double beta) {
  double attract = 0.0;
  for (std::size_t p = 0; p < q.rows(); ++p) {
    std::vector<double> scores(keys.rows());
    for (std::size_t i = 0; i < keys.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < q.cols(); ++j) s += q(p, j) * keys(i, j);
      scores[i] = s;
    }
    attract += lse(scores, beta);
  }
  double diag = 0.0;
  for (std::size_t p = 0; p < q.rows(); ++p)
    for (double x : q.row(p)) diag += x * x;
  return -attract + 0.5 * diag;
}

ContextSet three_contexts(Rng& rng, std::size_t n, std::size_t d_c) {
  std::vector<Matrix> ctx;
  for (int s = 0; s < 3; ++s) ctx.push_back(rng.normal_matrix(n, d_c));
  return ContextSet(std::move(ctx), Vector{0.9, 0.6, -0.4},
                    {"one", "two", "three"});
}

}  // namespace

TEST_CASE("query_energy matches the brute-force form") {
  Rng rng(5);
  for (int trial = 0; trial < 8; ++trial) {
    const Matrix q = rng.normal_matrix(1 + rng.uniform_index(5), 3);
    const Matrix keys = rng.normal_matrix(1 + rng.uniform_index(6), 3);
    for (double beta : {0.3, 1.0}) {
      CHECK(query_energy(q, keys, beta) ==
            doctest::Approx(naive_query_energy(q, keys, beta)).epsilon(1e-12));
    }
  }
}

TEST_CASE("compositional energy with one concept is the query energy") {
  Rng rng(9);
  const Matrix q = rng.normal_matrix(4, 3);
  const Matrix keys = rng.normal_matrix(5, 3);
  CHECK(compositional_energy(q, {keys}, 0.8) == query_energy(q, keys, 0.8));
}

TEST_CASE("compositional energy averages attraction but counts the diagonal once") {
  Rng rng(13);
  const Matrix q = rng.normal_matrix(3, 4);
  std::vector<Matrix> key_sets;
  for (int s = 0; s < 3; ++s) key_sets.push_back(rng.normal_matrix(4, 4));

  double mean_attract = 0.0;
  for (const Matrix& keys : key_sets) {
    double diag = 0.0;
    for (std::size_t p = 0; p < q.rows(); ++p)
      for (double x : q.row(p)) diag += x * x;
    mean_attract += naive_query_energy(q, keys, 0.6) - 0.5 * diag;
  }
  mean_attract /= 3.0;
  double diag = 0.0;
  for (std::size_t p = 0; p < q.rows(); ++p)
    for (double x : q.row(p)) diag += x * x;

  CHECK(compositional_energy(q, key_sets, 0.6) ==
        doctest::Approx(mean_attract + 0.5 * diag).epsilon(1e-12));
}

TEST_CASE("single-context forward is plain attention") {
  Rng rng(17);
  const Matrix q = rng.normal_matrix(6, 4);
  const Matrix c = rng.normal_matrix(3, 5);
  const Matrix w_k = rng.normal_matrix(5, 4);
  const Matrix w_v = rng.normal_matrix(5, 4);
  const double beta = 0.5;

  const ContextSet set = ContextSet::single(c);
  const Matrix got = ebcq_forward(q, set, w_k, w_v, beta);
  const Matrix want = attention_forward(q, matmul(c, w_k), matmul(c, w_v), beta);
  CHECK(max_abs_diff(got, want) == 0.0);
}

TEST_CASE("identical contexts with unit weights collapse to one context") {
  Rng rng(23);
  const Matrix q = rng.normal_matrix(4, 3);
  const Matrix c = rng.normal_matrix(2, 4);
  const Matrix w_k = rng.normal_matrix(4, 3);
  const Matrix w_v = rng.normal_matrix(4, 3);

  const ContextSet pair({c, c}, Vector{1.0, 1.0}, {"a", "b"});
  const Matrix got = ebcq_forward(q, pair, w_k, w_v, 0.9);
  const Matrix want = ebcq_forward(q, ContextSet::single(c), w_k, w_v, 0.9);
  CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("opposite weights on identical contexts cancel exactly") {
  Rng rng(27);
  const Matrix q = rng.normal_matrix(5, 3);
  const Matrix c = rng.normal_matrix(3, 4);
  const Matrix w_k = rng.normal_matrix(4, 3);
  const Matrix w_v = rng.normal_matrix(4, 3);

  const ContextSet pair({c, c}, Vector{1.0, -1.0}, {"add", "remove"});
  const Matrix out = ebcq_forward(q, pair, w_k, w_v, 0.9);
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (double x : out.row(r)) CHECK(x == 0.0);
}

TEST_CASE("the mixture is linear in the concept weights") {
  Rng rng(31);
  const Matrix q = rng.normal_matrix(4, 3);
  const Matrix w_k = rng.normal_matrix(5, 3);
  const Matrix w_v = rng.normal_matrix(5, 3);
  ContextSet set = three_contexts(rng, 3, 5);

  const Matrix base = ebcq_forward(q, set, w_k, w_v, 0.7);
  ContextSet scaled = set;
  for (double& a : scaled.alphas) a *= 2.5;
  const Matrix doubled = ebcq_forward(q, scaled, w_k, w_v, 0.7);
  CHECK(max_abs_diff(doubled, scale(base, 2.5)) < 1e-12);
}

TEST_CASE("reordering concepts leaves the output unchanged") {
  Rng rng(37);
  const Matrix q = rng.normal_matrix(4, 3);
  const Matrix w_k = rng.normal_matrix(5, 3);
  const Matrix w_v = rng.normal_matrix(5, 3);
  ContextSet set = three_contexts(rng, 3, 5);

  ContextSet rotated({set.contexts[2], set.contexts[0], set.contexts[1]},
                     Vector{set.alphas[2], set.alphas[0], set.alphas[1]},
                     {set.labels[2], set.labels[0], set.labels[1]});
  const Matrix a = ebcq_forward(q, set, w_k, w_v, 0.7);
  const Matrix b = ebcq_forward(q, rotated, w_k, w_v, 0.7);
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("degenerate context sets are rejected") {
  Rng rng(41);
  const Matrix q = rng.normal_matrix(4, 3);
  const Matrix w_k = rng.normal_matrix(5, 3);
  const Matrix w_v = rng.normal_matrix(5, 3);

  CHECK_THROWS(ContextSet({}, Vector{}, {}));
  CHECK_THROWS(ContextSet({rng.normal_matrix(2, 5)}, Vector{1.0, 2.0}, {"x"}));
  const ContextSet narrow = ContextSet::single(rng.normal_matrix(2, 4));
  CHECK_THROWS_AS(ebcq_forward(q, narrow, w_k, w_v, 0.7), ShapeError);
}
