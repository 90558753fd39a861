#include <arm_neon.h>

#include "tehtree/kernels.hpp"

namespace tehtree::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void squared_distances_neon(const double* query, const double* refs, std::size_t rows,
                            std::size_t dim, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = refs + r * dim;
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t k = 0;
    for (; k + 2 <= dim; k += 2) {
      const float64x2_t d = vsubq_f64(vld1q_f64(query + k), vld1q_f64(row + k));
      acc = vfmaq_f64(acc, d, d);
    }
    double s = vaddvq_f64(acc);
    for (; k < dim; ++k) {
      const double d = query[k] - row[k];
      s += d * d;
    }
    out[r] = s;
  }
}

}  // namespace

const KernelTable& neon_table() noexcept {
  static const KernelTable table{Isa::neon, &dot_neon, &squared_distances_neon};
  return table;
}

}  // namespace tehtree::kernels
