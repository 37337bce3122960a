#pragma once

#include <span>

#include "ebca/matrix.hpp"

namespace ebca {

// Pattern memory: patterns are the columns of a d x N matrix, plus an inverse
// temperature beta > 0.
struct PatternStore {
  Matrix patterns;
  double beta;

  PatternStore(Matrix p, double b);

  std::size_t dim() const { return patterns.rows(); }
  std::size_t count() const { return patterns.cols(); }
};

// E(zeta) = 0.5 * zeta^T zeta - lse(X^T zeta, beta).
double hopfield_energy(std::span<const double> zeta, const PatternStore& store);

// Gradient of the energy: zeta - X * softmax(beta * X^T zeta).
Vector hopfield_energy_grad(std::span<const double> zeta, const PatternStore& store);

// Concave-convex fixed-point update: X * softmax(beta * X^T zeta). Each
// application does not increase the energy.
Vector hopfield_update(std::span<const double> zeta, const PatternStore& store);

// Damped form zeta - eta * (zeta - hopfield_update(zeta)); eta = 1 recovers
// the fixed-point update, eta = 0 is a no-op.
Vector hopfield_gd_step(std::span<const double> zeta, const PatternStore& store,
                        double eta);

// Single-head attention: row_softmax(beta * Q K^T) * V. Applying the
// fixed-point update independently to every query row, with V taking the
// place of the pattern matrix on the output side. beta = 0 is the uniform
// averaging limit.
Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                         double beta);

}  // namespace ebca
