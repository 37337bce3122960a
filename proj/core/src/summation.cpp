#include "ebca/summation.hpp"

namespace ebca {

double compensated_sum(std::span<const double> v) {
  Neumaier acc;
  for (double x : v) acc.add(x);
  return acc.value();
}

double cascade_dot(const double* a, std::size_t stride_a, const double* b,
                   std::size_t stride_b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[(i + 0) * stride_a] * b[(i + 0) * stride_b];
    s1 += a[(i + 1) * stride_a] * b[(i + 1) * stride_b];
    s2 += a[(i + 2) * stride_a] * b[(i + 2) * stride_b];
    s3 += a[(i + 3) * stride_a] * b[(i + 3) * stride_b];
  }
  double s = (s0 + s2) + (s1 + s3);
  for (; i < n; ++i) s += a[i * stride_a] * b[i * stride_b];
  return s;
}

}  // namespace ebca
