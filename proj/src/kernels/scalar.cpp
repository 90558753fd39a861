#include "tehtree/kernels.hpp"

namespace tehtree::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void squared_distances_scalar(const double* query, const double* refs, std::size_t rows,
                              std::size_t dim, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = refs + r * dim;
    double s = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = query[k] - row[k];
      s += d * d;
    }
    out[r] = s;
  }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{Isa::scalar, &dot_scalar, &squared_distances_scalar};
  return table;
}

}  // namespace tehtree::kernels
