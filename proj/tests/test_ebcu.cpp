#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ebca/ebcu.hpp"
#include "ebca/matrix.hpp"
#include "ebca/numerics.hpp"
#include "ebca/rng.hpp"
#include "support/fd.hpp"

using namespace ebca;
using ebca::testing::fd_grad;
using ebca::testing::grad_rel_err;

namespace {

double naive_cond_energy(const Matrix& q, const Matrix& k, double alpha, double beta) {
  double keys = 0.0;
  for (std::size_t i = 0; i < k.rows(); ++i)
    for (double x : k.row(i)) keys += x * x;
  double attract = 0.0;
  for (std::size_t i = 0; i < k.rows(); ++i) {
    std::vector<double> col(q.rows());
    for (std::size_t p = 0; p < q.rows(); ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < q.cols(); ++j) s += q(p, j) * k(i, j);
      col[p] = s;
    }
    attract += lse(col, beta);
  }
  return 0.5 * alpha * keys - attract;
}

double naive_prior_energy(const Matrix& k) {
  std::vector<double> half(k.rows());
  for (std::size_t i = 0; i < k.rows(); ++i) {
    double s = 0.0;
    for (double x : k.row(i)) s += x * x;
    half[i] = 0.5 * s;
  }
  return lse(half, 1.0);
}

double log_posterior(const Matrix& q, const Matrix& k, double alpha, double beta) {
  return -(naive_cond_energy(q, k, alpha, beta) + naive_prior_energy(k));
}

}  // namespace

TEST_CASE("schedule profiles") {
  ScheduleSpec constant;
  CHECK(schedule_profile(constant, 0) == 1.0);
  CHECK(schedule_profile(constant, 41) == 1.0);

  ScheduleSpec step{ScheduleKind::step, 1.0, 10, 1.0};
  CHECK(schedule_profile(step, 10) == 0.0);
  CHECK(schedule_profile(step, 11) == 1.0);

  ScheduleSpec decay{ScheduleKind::exp_decay, 1.0, 0, 0.5};
  CHECK(schedule_profile(decay, 0) == 1.0);
  CHECK(schedule_profile(decay, 3) == doctest::Approx(0.125));

  ScheduleSpec rate{ScheduleKind::exp_decay, 0.2, 0, 0.5};
  CHECK(schedule_rate(rate, 2) == doctest::Approx(0.05));

  ScheduleSpec bad{ScheduleKind::exp_decay, 1.0, 0, 1.5};
  CHECK_THROWS_AS(validate_schedule(bad), std::domain_error);
  ScheduleSpec negative{ScheduleKind::constant, -0.1, 0, 1.0};
  CHECK_THROWS_AS(validate_schedule(negative), std::domain_error);
}

TEST_CASE("conditional and prior energies match brute force") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(5);
    const std::size_t p = 1 + rng.uniform_index(7);
    const std::size_t d = 1 + rng.uniform_index(6);
    const Matrix q = rng.normal_matrix(p, d);
    const Matrix k = rng.normal_matrix(n, d);
    for (double alpha : {0.0, 0.5}) {
      for (double beta : {0.25, 1.0}) {
        CHECK(cond_energy(q, k, alpha, beta) ==
              doctest::Approx(naive_cond_energy(q, k, alpha, beta)).epsilon(1e-12));
      }
    }
    CHECK(prior_energy(k) == doctest::Approx(naive_prior_energy(k)).epsilon(1e-12));
  }
}

TEST_CASE("cond_energy_given_scores agrees with the direct form") {
  Rng rng(19);
  const Matrix q = rng.normal_matrix(6, 4);
  const Matrix k = rng.normal_matrix(3, 4);
  const Matrix s = matmul_nt(q, k);
  CHECK(cond_energy_given_scores(s, k, 0.5, 0.8) ==
        cond_energy(q, k, 0.5, 0.8));
}

TEST_CASE("grad_log_posterior matches finite differences of the log posterior") {
  Rng rng(29);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(4);
    const std::size_t p = 1 + rng.uniform_index(6);
    const std::size_t d = 1 + rng.uniform_index(5);
    const Matrix q = rng.normal_matrix(p, d, 0.7);
    const Matrix k = rng.normal_matrix(n, d, 0.7);
    const double alpha = trial % 2 ? 0.5 : 0.0;
    const double beta = trial % 3 ? 1.0 : 0.25;

    const Matrix analytic = grad_log_posterior(q, k, alpha, beta);
    const Matrix numeric = fd_grad(
        [&](const Matrix& kk) { return log_posterior(q, kk, alpha, beta); }, k);
    CHECK(grad_rel_err(analytic, numeric) < 1e-7);
  }
}

TEST_CASE("grad via precomputed scores equals the direct gradient") {
  Rng rng(37);
  const Matrix q = rng.normal_matrix(5, 3);
  const Matrix k = rng.normal_matrix(4, 3);
  const Matrix s = matmul_nt(q, k);
  const Matrix a = grad_log_posterior(q, k, 0.25, 0.9);
  const Matrix b = grad_log_posterior_given_scores(s, q, k, 0.25, 0.9);
  CHECK(bitwise_equal(a, b));
}

TEST_CASE("context_update follows the chain rule through the key projection") {
  Rng rng(43);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(3);
    const std::size_t p = 1 + rng.uniform_index(5);
    const std::size_t d_c = 1 + rng.uniform_index(4);
    const std::size_t d_h = 1 + rng.uniform_index(4);
    const Matrix c = rng.normal_matrix(n, d_c, 0.7);
    const Matrix q = rng.normal_matrix(p, d_h, 0.7);
    const Matrix w_k = rng.normal_matrix(d_c, d_h, 0.7);
    const double gamma = 0.05;
    auto cfg = UpdateConfig::uniform(0.7, gamma, gamma);

    const Matrix updated = context_update(c, q, w_k, cfg, 0);
    Matrix step = subtract(updated, c);
    const Matrix numeric = fd_grad(
        [&](const Matrix& cc) {
          return log_posterior(q, matmul(cc, w_k), cfg.alpha, cfg.beta);
        },
        c);
    CHECK(grad_rel_err(scale(step, 1.0 / gamma), numeric) < 1e-6);
  }
}

TEST_CASE("zero rates leave the context bit-identical") {
  Rng rng(51);
  const Matrix c = rng.normal_matrix(3, 4);
  const Matrix q = rng.normal_matrix(6, 5);
  const Matrix w_k = rng.normal_matrix(4, 5);
  auto cfg = UpdateConfig::uniform(0.6, 0.0, 0.0);
  const Matrix out = context_update(c, q, w_k, cfg, 7);
  CHECK(bitwise_equal(out, c));

  auto stepped = UpdateConfig::uniform(0.6, 0.1, 0.1);
  stepped.schedule = ScheduleSpec{ScheduleKind::step, 1.0, 100, 1.0};
  CHECK(bitwise_equal(context_update(c, q, w_k, stepped, 50), c));
}

TEST_CASE("scalar gamma broadcasts across context rows") {
  Rng rng(61);
  const Matrix c = rng.normal_matrix(3, 4);
  const Matrix q = rng.normal_matrix(5, 6);
  const Matrix w_k = rng.normal_matrix(4, 6);

  auto scalar = UpdateConfig::uniform(0.8, 0.03, 0.01);
  auto vec = scalar;
  vec.gamma_attn = Vector(3, 0.03);
  vec.gamma_reg = Vector(3, 0.01);
  CHECK(bitwise_equal(context_update(c, q, w_k, scalar, 1),
                      context_update(c, q, w_k, vec, 1)));
}

TEST_CASE("per-row gamma scales each context row independently") {
  Rng rng(67);
  const Matrix c = rng.normal_matrix(2, 3);
  const Matrix q = rng.normal_matrix(4, 5);
  const Matrix w_k = rng.normal_matrix(3, 5);

  auto both = UpdateConfig::uniform(0.9, 0.0, 0.0);
  both.gamma_attn = Vector{0.04, 0.0};
  auto first_only = UpdateConfig::uniform(0.9, 0.04, 0.0);

  const Matrix mixed = context_update(c, q, w_k, both, 0);
  const Matrix full = context_update(c, q, w_k, first_only, 0);
  for (std::size_t j = 0; j < c.cols(); ++j) {
    CHECK(mixed(0, j) == full(0, j));
    CHECK(mixed(1, j) == c(1, j));
  }
}

TEST_CASE("all-ones mask equals the unmasked update") {
  Rng rng(71);
  const Matrix c = rng.normal_matrix(3, 4);
  const Matrix q = rng.normal_matrix(5, 6);
  const Matrix w_k = rng.normal_matrix(4, 6);
  auto masked = UpdateConfig::uniform(0.7, 0.05, 0.02);
  masked.mask = Vector(5, 1.0);
  auto plain = UpdateConfig::uniform(0.7, 0.05, 0.02);
  CHECK(bitwise_equal(context_update(c, q, w_k, masked, 2),
                      context_update(c, q, w_k, plain, 2)));
}

TEST_CASE("masked-out queries stop feeding the attraction term") {
  Rng rng(73);
  const Matrix c = rng.normal_matrix(2, 3);
  const Matrix w_k = rng.normal_matrix(3, 4);
  Matrix q = rng.normal_matrix(4, 4);

  auto cfg = UpdateConfig::uniform(0.8, 0.05, 0.0);
  cfg.mask = Vector{1.0, 0.0, 1.0, 0.0};
  const Matrix masked = context_update(c, q, w_k, cfg, 0);

  const Matrix keys = matmul(c, w_k);
  const Matrix weights = row_softmax(matmul_nt(keys, q), cfg.beta);
  Matrix q_masked = q;
  for (std::size_t j = 0; j < q.cols(); ++j) {
    q_masked(1, j) = 0.0;
    q_masked(3, j) = 0.0;
  }
  const Matrix attract = matmul(matmul(weights, q_masked), transpose(w_k));
  Matrix want = c;
  for (std::size_t i = 0; i < want.rows(); ++i)
    for (std::size_t j = 0; j < want.cols(); ++j)
      want(i, j) += 0.05 * attract(i, j);
  CHECK(max_abs_diff(masked, want) < 1e-12);
}

TEST_CASE("config validation rejects malformed settings") {
  auto cfg = UpdateConfig::uniform(1.0, 0.1, 0.1);
  cfg.gamma_attn = Vector{-0.1};
  CHECK_THROWS_AS(validate_update_config(cfg), std::domain_error);

  auto bad_mask = UpdateConfig::uniform(1.0, 0.1, 0.1);
  bad_mask.mask = Vector{0.5};
  CHECK_THROWS_AS(validate_update_config(bad_mask), std::domain_error);

  auto bad_beta = UpdateConfig::uniform(0.0, 0.1, 0.1);
  CHECK_THROWS_AS(validate_update_config(bad_beta), std::domain_error);

  Rng rng(79);
  const Matrix c = rng.normal_matrix(2, 3);
  const Matrix q = rng.normal_matrix(4, 5);
  const Matrix w_k = rng.normal_matrix(3, 5);
  auto wrong_len = UpdateConfig::uniform(1.0, 0.1, 0.1);
  wrong_len.gamma_attn = Vector{0.1, 0.1, 0.1};
  CHECK_THROWS_AS(context_update(c, q, w_k, wrong_len, 0), ShapeError);
}

TEST_CASE("the update direction raises the log posterior for small rates") {
  Rng rng(83);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix c = rng.normal_matrix(3, 4, 0.6);
    const Matrix q = rng.normal_matrix(6, 5, 0.6);
    const Matrix w_k = rng.normal_matrix(4, 5, 0.6);
    auto cfg = UpdateConfig::uniform(0.7, 1e-3, 1e-3);
    const Matrix updated = context_update(c, q, w_k, cfg, 0);
    const double before = log_posterior(q, matmul(c, w_k), cfg.alpha, cfg.beta);
    const double after = log_posterior(q, matmul(updated, w_k), cfg.alpha, cfg.beta);
    CHECK(after > before);
  }
}
