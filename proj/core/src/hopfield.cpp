#include "ebca/hopfield.hpp"

#include <stdexcept>

#include "ebca/numerics.hpp"
#include "ebca/summation.hpp"

namespace ebca {

PatternStore::PatternStore(Matrix p, double b) : patterns(std::move(p)), beta(b) {
  if (!(beta > 0.0)) throw std::domain_error("PatternStore: beta must be positive");
}

double hopfield_energy(std::span<const double> zeta, const PatternStore& store) {
  if (zeta.size() != store.dim()) throw ShapeError("hopfield_energy: state dimension mismatch");
  Neumaier sq;
  for (double x : zeta) sq.add(x * x);
  const Vector scores = tmatvec(store.patterns, zeta);
  return 0.5 * sq.value() - lse(scores, store.beta);
}

Vector hopfield_update(std::span<const double> zeta, const PatternStore& store) {
  if (zeta.size() != store.dim()) throw ShapeError("hopfield_update: state dimension mismatch");
  const Vector scores = tmatvec(store.patterns, zeta);
  const Vector w = softmax_scaled(scores, store.beta);
  return matvec(store.patterns, w);
}

Vector hopfield_energy_grad(std::span<const double> zeta, const PatternStore& store) {
  Vector u = hopfield_update(zeta, store);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = zeta[i] - u[i];
  return u;
}

Vector hopfield_gd_step(std::span<const double> zeta, const PatternStore& store,
                        double eta) {
  Vector u = hopfield_update(zeta, store);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = zeta[i] - eta * (zeta[i] - u[i]);
  return u;
}

Matrix attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                         double beta) {
  if (q.cols() != k.cols()) throw ShapeError("attention_forward: query/key width mismatch");
  if (k.rows() != v.rows()) throw ShapeError("attention_forward: key/value count mismatch");
  return matmul(row_softmax(matmul_nt(q, k), beta), v);
}

}  // namespace ebca
