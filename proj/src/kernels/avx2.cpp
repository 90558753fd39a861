#include <immintrin.h>

#include "tehtree/kernels.hpp"

namespace tehtree::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void squared_distances_avx2(const double* query, const double* refs, std::size_t rows,
                            std::size_t dim, double* out) {
  if (dim < 4) {
    // Too narrow for a row-wise vector; vectorize across rows instead.
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t k = 0; k < dim; ++k) {
        const __m256d col = _mm256_set_pd(refs[(r + 3) * dim + k], refs[(r + 2) * dim + k],
                                          refs[(r + 1) * dim + k], refs[r * dim + k]);
        const __m256d d = _mm256_sub_pd(_mm256_set1_pd(query[k]), col);
        acc = _mm256_fmadd_pd(d, d, acc);
      }
      _mm256_storeu_pd(out + r, acc);
    }
    for (; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = query[k] - refs[r * dim + k];
        s += d * d;
      }
      out[r] = s;
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = refs + r * dim;
    __m256d acc = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= dim; k += 4) {
      const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(query + k), _mm256_loadu_pd(row + k));
      acc = _mm256_fmadd_pd(d, d, acc);
    }
    double s = hsum(acc);
    for (; k < dim; ++k) {
      const double d = query[k] - row[k];
      s += d * d;
    }
    out[r] = s;
  }
}

}  // namespace

const KernelTable& avx2_table() noexcept {
  static const KernelTable table{Isa::avx2, &dot_avx2, &squared_distances_avx2};
  return table;
}

}  // namespace tehtree::kernels
