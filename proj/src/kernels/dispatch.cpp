#include <cstdlib>
#include <string_view>

#include "tehtree/kernels.hpp"

namespace tehtree::kernels {

#if defined(TEHTREE_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(TEHTREE_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif

const char* isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
    case Isa::scalar:
      break;
  }
  return "scalar";
}

const KernelTable* table_for(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return &scalar_table();
    case Isa::avx2:
#if defined(TEHTREE_HAVE_AVX2)
      if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &avx2_table();
#endif
      return nullptr;
    case Isa::neon:
#if defined(TEHTREE_HAVE_NEON)
      return &neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

namespace {

const KernelTable& select() noexcept {
  if (const char* env = std::getenv("TEHTREE_SIMD")) {
    const std::string_view want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa)) {
        if (const KernelTable* t = table_for(isa)) return *t;
      }
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (const KernelTable* t = table_for(isa)) return *t;
  }
  return scalar_table();
}

}  // namespace

const KernelTable& active() noexcept {
  static const KernelTable& table = select();
  return table;
}

}  // namespace tehtree::kernels
