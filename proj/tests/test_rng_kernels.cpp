#include <doctest.h>

#include <cmath>
#include <numeric>
#include <string>

#include "tehtree/kernels.hpp"
#include "tehtree/rng.hpp"

using namespace tehtree;

TEST_SUITE("rng") {

TEST_CASE("engine sequence is the standard mt19937_64") {
  // 10000th output of the default-seeded engine, fixed by the C++ standard.
  Rng rng(5489u);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  CHECK(v == 9981545732273789042ull);
}

TEST_CASE("uniform01 and uniform_int stay in range") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(rng.uniform_int(7) < 7);
  }
}

TEST_CASE("normal draws have unit moments") {
  Rng rng(2);
  double s = 0.0, ss = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double v = rng.normal();
    s += v;
    ss += v * v;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(ss / n - 1.0) < 0.02);
}

TEST_CASE("derived streams differ by tag and are stable") {
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
}

TEST_CASE("shuffle is a permutation") {
  Rng rng(4);
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  rng.shuffle(v);
  std::vector<int> s = v;
  std::sort(s.begin(), s.end());
  for (int i = 0; i < 50; ++i) CHECK(s[static_cast<std::size_t>(i)] == i);
}

}

TEST_SUITE("kernels") {

TEST_CASE("every available variant matches the scalar reference") {
  Rng rng(11);
  const auto& ref = kernels::scalar_table();
  for (auto isa : {kernels::Isa::avx2, kernels::Isa::neon}) {
    const kernels::KernelTable* t = kernels::table_for(isa);
    if (!t) continue;
    MESSAGE("checking " << std::string(kernels::isa_name(isa)));
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 33u, 100u, 1001u}) {
      std::vector<double> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal();
      }
      const double r = ref.dot(a.data(), b.data(), n);
      const double v = t->dot(a.data(), b.data(), n);
      double scale = 0.0;
      for (std::size_t i = 0; i < n; ++i) scale += std::fabs(a[i] * b[i]);
      CHECK(std::fabs(r - v) <= 1e-13 * (1.0 + scale));
    }
    for (std::size_t dim : {1u, 2u, 3u, 4u, 5u, 9u, 10u, 13u}) {
      const std::size_t rows = 37;
      std::vector<double> q(dim), refs(rows * dim), out_ref(rows), out(rows);
      for (auto& v : q) v = rng.normal();
      for (auto& v : refs) v = rng.normal();
      ref.squared_distances(q.data(), refs.data(), rows, dim, out_ref.data());
      t->squared_distances(q.data(), refs.data(), rows, dim, out.data());
      for (std::size_t r = 0; r < rows; ++r) {
        CHECK(std::fabs(out[r] - out_ref[r]) <= 1e-13 * (1.0 + out_ref[r]));
      }
    }
  }
}

TEST_CASE("scalar kernels are exact on small integers") {
  const double a[] = {1, 2, 3, 4, 5};
  const double b[] = {5, 4, 3, 2, 1};
  CHECK(kernels::scalar_table().dot(a, b, 5) == 35.0);
  double out[2];
  const double refs[] = {1, 2, 3, 4, 5, 5, 4, 3, 2, 1};
  kernels::scalar_table().squared_distances(a, refs, 2, 5, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 40.0);
}

TEST_CASE("active table is one of the known variants") {
  const auto& t = kernels::active();
  CHECK(t.dot != nullptr);
  CHECK(t.squared_distances != nullptr);
  CHECK(kernels::table_for(kernels::Isa::scalar) == &kernels::scalar_table());
}

}
