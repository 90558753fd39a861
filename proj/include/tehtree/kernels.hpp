#pragma once

// Data-parallel inner loops with a scalar reference implementation and SIMD
// variants (AVX2+FMA on x86-64, NEON on AArch64). The variant is picked once at
// first use from the CPU's capabilities; TEHTREE_SIMD=scalar|avx2|neon in the
// environment overrides the choice. SIMD variants reassociate sums, so they
// agree with the scalar reference to rounding, not bit for bit.

#include <cstddef>
#include <span>

namespace tehtree::kernels {

enum class Isa { scalar, avx2, neon };

const char* isa_name(Isa isa) noexcept;

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // out[r] = ||query - refs[r*dim .. r*dim+dim)||^2 for r < rows.
  void (*squared_distances)(const double* query, const double* refs, std::size_t rows,
                            std::size_t dim, double* out);
};

const KernelTable& scalar_table() noexcept;
// nullptr when the variant is not compiled in or the CPU lacks the extension.
const KernelTable* table_for(Isa isa) noexcept;
const KernelTable& active() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

// refs is row-major with refs.size() / query.size() rows; out must hold that many values.
inline void squared_distances(std::span<const double> query, std::span<const double> refs,
                              std::span<double> out) {
  const std::size_t dim = query.size();
  const std::size_t rows = dim == 0 ? out.size() : refs.size() / dim;
  active().squared_distances(query.data(), refs.data(), rows, dim, out.data());
}

}  // namespace tehtree::kernels
