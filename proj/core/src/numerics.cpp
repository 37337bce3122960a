#include "ebca/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ebca/summation.hpp"

namespace ebca {

double lse(std::span<const double> v, double beta) {
  if (v.empty()) throw std::domain_error("lse: empty vector");
  if (!(beta > 0.0)) throw std::domain_error("lse: beta must be positive");
  const double m = *std::max_element(v.begin(), v.end());
  Neumaier acc;
  for (double x : v) acc.add(std::exp(beta * (x - m)));
  return m + std::log(acc.value()) / beta;
}

Vector softmax_scaled(std::span<const double> v, double beta) {
  if (v.empty()) throw std::domain_error("softmax: empty vector");
  if (beta < 0.0) throw std::domain_error("softmax: beta must be nonnegative");
  double m = v[0] * beta;
  for (double x : v) m = std::max(m, x * beta);
  Vector out(v.size());
  Neumaier acc;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] * beta - m);
    acc.add(out[i]);
  }
  const double z = acc.value();
  for (double& x : out) x /= z;
  return out;
}

Vector softmax(std::span<const double> v) { return softmax_scaled(v, 1.0); }

Matrix row_softmax(const Matrix& a, double beta) {
  if (beta < 0.0) throw std::domain_error("row_softmax: beta must be nonnegative");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Vector w = softmax_scaled(a.row(i), beta);
    std::copy(w.begin(), w.end(), out.row(i).begin());
  }
  out.ensure_finite("row_softmax");
  return out;
}

Vector row_sq_norms(const Matrix& a) {
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    Neumaier acc;
    for (double x : a.row(i)) acc.add(x * x);
    out[i] = acc.value();
  }
  return out;
}

double sq_norm_sum(const Matrix& a) {
  Neumaier acc;
  for (double x : a.data()) acc.add(x * x);
  return acc.value();
}

Matrix scale_rows(const Matrix& a, std::span<const double> d) {
  if (d.size() != a.rows()) throw ShapeError("scale_rows: diagonal length mismatch");
  std::vector<double> data(a.data().size());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) data[i * a.cols() + j] = d[i] * a(i, j);
  }
  return Matrix(a.rows(), a.cols(), std::move(data));
}

}  // namespace ebca
