#pragma once

#include <optional>

#include "ebca/matrix.hpp"

namespace ebca {

enum class ScheduleKind { constant, step, exp_decay };

// Learning-rate schedule. gamma0 is the base rate used by the standalone
// evaluation; inside context_update the per-token gamma vectors play the role
// of gamma0 and only the time profile applies.
struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::constant;
  double gamma0 = 0.0;
  long tau = 0;
  double lambda = 1.0;
};

void validate_schedule(const ScheduleSpec& spec);

// Time profile: constant -> 1; step -> 0 until t reaches tau, 1 after;
// exp_decay -> lambda^t.
double schedule_profile(const ScheduleSpec& spec, long t);

// gamma(t) = gamma0 * profile(t).
double schedule_rate(const ScheduleSpec& spec, long t);

// Configuration of one context-update rule application.
//
// gamma_attn / gamma_reg hold per-token base rates; a single entry broadcasts
// uniformly over all context tokens. alpha is the quadratic key penalty
// weight (0 in the practical update rule; nonzero values fold into the
// regularization term). mask, when present, holds one {0,1} entry per query
// row; masked-out rows contribute exactly zero to the attention term and the
// softmax weights are NOT renormalized over the surviving rows.
struct UpdateConfig {
  double beta = 1.0;
  double alpha = 0.0;
  Vector gamma_attn{0.0};
  Vector gamma_reg{0.0};
  ScheduleSpec schedule{};
  std::optional<Vector> mask;

  static UpdateConfig uniform(double beta, double gamma_attn, double gamma_reg);
};

void validate_update_config(const UpdateConfig& cfg);

// Conditional energy of keys K (N x d) given queries Q (P x d):
//   E(Q; K) = alpha/2 * sq_norm_sum(K) - sum_i lse(Q k_i^T, beta)
double cond_energy(const Matrix& q, const Matrix& k, double alpha, double beta);

// Same energy evaluated from precomputed scores S = Q K^T.
double cond_energy_given_scores(const Matrix& s, const Matrix& k, double alpha,
                                double beta);

// Prior energy of keys: log sum_i exp(0.5 * ||k_i||^2).
double prior_energy(const Matrix& k);

// Gradient of the key log-posterior log p(K | Q):
//   row_softmax(beta * K Q^T) Q - (alpha I + diag(softmax(0.5 ||k_i||^2))) K
Matrix grad_log_posterior(const Matrix& q, const Matrix& k, double alpha,
                          double beta);
Matrix grad_log_posterior_given_scores(const Matrix& s, const Matrix& q,
                                       const Matrix& k, double alpha, double beta);

// One context ascent step through the key projection:
//   C + [g_attn(t) . (row_softmax(beta K Q^T) (M.Q))
//        - g_reg(t) . ((alpha I + diag(softmax(0.5 ||k_i||^2))) K)] W_K^T
// with K = C W_K, per-token rates g(t) = gamma * profile(schedule, t) applied
// as row scaling before the W_K^T projection. When every effective rate is
// zero the input C is returned unchanged, bit for bit.
Matrix context_update(const Matrix& c, const Matrix& q, const Matrix& w_k,
                      const UpdateConfig& cfg, long t);
Matrix context_update_given_scores(const Matrix& c, const Matrix& q,
                                   const Matrix& s, const Matrix& k,
                                   const Matrix& w_k, const UpdateConfig& cfg,
                                   long t);

}  // namespace ebca
