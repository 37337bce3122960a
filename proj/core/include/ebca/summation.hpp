#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace ebca {

// Kahan-Babuska (Neumaier) compensated accumulator. Used for the reductions
// that feed tight numeric tolerances: log-sum-exp, softmax normalizers,
// squared-norm sums and energy accumulations.
struct Neumaier {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + comp; }
};

double compensated_sum(std::span<const double> v);

// Dot product with a fixed cascaded summation order: four interleaved partial
// accumulators combined pairwise at the end, remainder folded in sequentially.
// The order depends only on n, never on the strides, so transposed and
// contiguous walks over the same value sequence produce identical bits.
double cascade_dot(const double* a, std::size_t stride_a, const double* b,
                   std::size_t stride_b, std::size_t n);

}  // namespace ebca
