#pragma once

#include <span>

#include "ebca/matrix.hpp"

namespace ebca {

// Inverse-temperature log-sum-exp:
//   lse(v, beta) = beta^-1 * log sum_i exp(beta * v_i)
// Stabilized by max subtraction; satisfies max(v) <= lse <= max(v) + log(n)/beta.
double lse(std::span<const double> v, double beta);

// softmax(v) = exp(v - lse(v, 1)); entries are positive and sum to 1.
Vector softmax(std::span<const double> v);

// softmax(beta * v); shares the arithmetic path of softmax so scaled and
// unscaled callers agree bit for bit when beta == 1.
Vector softmax_scaled(std::span<const double> v, double beta);

// Row-wise softmax of beta * A. beta == 0 is the uniform limit (every row
// becomes 1/cols); negative beta is rejected.
Matrix row_softmax(const Matrix& a, double beta);

// Squared Euclidean norm of each row.
Vector row_sq_norms(const Matrix& a);

// Sum of squared entries, i.e. the trace of A * A^T.
double sq_norm_sum(const Matrix& a);

// Left-multiplication by diag(d): row i of the result is d[i] * row i of A.
Matrix scale_rows(const Matrix& a, std::span<const double> d);

}  // namespace ebca
