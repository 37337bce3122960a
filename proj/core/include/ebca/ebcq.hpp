#pragma once

#include <string>
#include <vector>

#include "ebca/matrix.hpp"

namespace ebca {

// A weighted collection of contexts. The first context is the main one and
// carries weight 1 by convention; negative weights subtract a concept.
// Contexts may have different token counts but share the embedding width.
struct ContextSet {
  std::vector<Matrix> contexts;
  Vector alphas;
  std::vector<std::string> labels;

  ContextSet(std::vector<Matrix> ctx, Vector a, std::vector<std::string> lbl);
  static ContextSet single(Matrix ctx, std::string label = "main");

  std::size_t size() const { return contexts.size(); }
  std::size_t embed_dim() const { return contexts.front().cols(); }
};

// Energy of queries against one key set:
//   E(Q; K) = 0.5 * sq_norm_sum(Q) - sum_i lse(K q_i^T, beta)
double query_energy(const Matrix& q, const Matrix& keys, double beta);

// Multi-context average: 0.5 * sq_norm_sum(Q) - 1/M sum_s sum_i lse(K_s q_i^T, beta).
double compositional_energy(const Matrix& q, const std::vector<Matrix>& key_sets,
                            double beta);

// Weighted attention mixture over contexts:
//   1/M * sum_s alpha_s * row_softmax(beta * Q K_s^T) V_s
// with K_s = C_s W_K and V_s = C_s W_V. A single context with weight 1
// reproduces attention_forward bit for bit.
Matrix ebcq_forward(const Matrix& q, const ContextSet& set, const Matrix& w_k,
                    const Matrix& w_v, double beta);

}  // namespace ebca
