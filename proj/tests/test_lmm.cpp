#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "tehtree/error.hpp"
#include "tehtree/lmm.hpp"
#include "tehtree/rng.hpp"

using namespace tehtree;

namespace {

struct Instance {
  std::vector<double> x, y;
  std::vector<int> group;
};

// n = 30 in 10 groups of 3 with a genuine random intercept.
Instance grouped_instance(std::uint64_t seed) {
  Rng rng(seed);
  Instance in;
  const double tau = 0.3 + 1.2 * rng.uniform01();
  std::vector<double> b(10);
  for (auto& v : b) v = tau * rng.normal();
  for (int i = 0; i < 30; ++i) {
    const int g = i % 10;
    const double x = rng.normal();
    in.x.push_back(x);
    in.group.push_back(g * 7 + 3);
    in.y.push_back(0.5 + 0.4 * x + b[static_cast<std::size_t>(g)] + rng.normal());
  }
  return in;
}

std::vector<int> singletons(std::size_t n) {
  std::vector<int> g(n);
  std::iota(g.begin(), g.end(), 0);
  return g;
}

}  // namespace

TEST_SUITE("lmm") {

TEST_CASE("singleton groups reproduce ordinary least squares") {
  const std::vector<double> x{0, 1, 2, 3}, d{1, 2, 4, 5};
  const LmmFit f = fit_random_intercept(x, d, singletons(4));
  CHECK(f.tau2 == 0.0);
  CHECK(f.beta1 == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(f.beta0 == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(f.df == 2);
}

TEST_CASE("constant delta gives zero slope and p = 1") {
  const std::vector<double> x{0, 1, 2, 3, 4}, d{2, 2, 2, 2, 2};
  const LmmFit f = fit_random_intercept(x, d, std::vector<int>{0, 0, 1, 2, 2});
  CHECK(f.beta1 == 0.0);
  CHECK(f.sigma2 == 0.0);
  CHECK(f.p_value == 1.0);
}

TEST_CASE("constant regressor and short inputs are rejected") {
  const std::vector<double> x{1, 1, 1, 1}, d{1, 2, 3, 4};
  CHECK_THROWS_AS(fit_random_intercept(x, d, singletons(4)), DegenerateRegressor);
  const std::vector<double> x3{1, 2, 3}, d3{1, 2, 3};
  CHECK_THROWS_AS(fit_random_intercept(x3, d3, singletons(3)), ValidationError);
  CHECK_THROWS_AS(fit_random_intercept(x, d3, singletons(4)), ValidationError);
}

TEST_CASE("p-value is the two-sided t tail") {
  const Instance in = grouped_instance(3);
  const LmmFit f = fit_random_intercept(in.x, in.y, in.group);
  CHECK(f.df == 30 - 10 - 1);
  CHECK(f.p_value == doctest::Approx(two_sided_t_pvalue(f.t_stat, f.df)).epsilon(1e-14));
  CHECK(f.t_stat == doctest::Approx(f.beta1 / f.se_beta1).epsilon(1e-12));
  CHECK(two_sided_t_pvalue(0.0, 5) == 1.0);
}

TEST_CASE("singleton groups match the classical slope t-test") {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
      x[i] = rng.normal();
      y[i] = 0.2 * x[i] + rng.normal();
    }
    const LmmFit f = fit_random_intercept(x, y, singletons(40));
    const auto o = oracle::ols_slope_test(x, y);
    CHECK(f.df == 38);
    CHECK(std::fabs(f.p_value - o.p) <= 1e-9);
    CHECK(std::fabs(f.beta1 - o.beta1) <= 1e-12);
    CHECK(std::fabs(f.t_stat - o.t) <= 1e-9);
  }
}

TEST_CASE("grouped fits match the dense-covariance likelihood maximizer") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance in = grouped_instance(1000 + seed);
    const LmmFit f = fit_random_intercept(in.x, in.y, in.group);
    const auto o = oracle::dense_reml_fit(in.x, in.y, in.group);
    CHECK(std::fabs(f.loglik - o.loglik) <= 1e-5);
    CHECK(std::fabs(f.beta0 - o.beta0) <= 1e-3);
    CHECK(std::fabs(f.beta1 - o.beta1) <= 1e-3);
    CHECK(std::fabs(f.sigma2 - o.sigma2) <= 1e-3);
    CHECK(std::fabs(f.tau2 - o.tau2) <= 1e-3);
    // Reported likelihood is the dense likelihood at the reported parameters.
    CHECK(oracle::dense_reml_loglik(in.x, in.y, in.group, f.sigma2, f.tau2) ==
          doctest::Approx(f.loglik).epsilon(1e-9));
  }
}

TEST_CASE("returned lambda beats every grid point") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Instance in = grouped_instance(50 + seed);
    const LmmFit f = fit_random_intercept(in.x, in.y, in.group);
    double xbar = 0.0, ybar = 0.0;
    for (std::size_t i = 0; i < in.x.size(); ++i) {
      xbar += in.x[i];
      ybar += in.y[i];
    }
    xbar /= 30.0;
    ybar /= 30.0;
    std::vector<double> xc(in.x), yc(in.y);
    for (auto& v : xc) v -= xbar;
    for (auto& v : yc) v -= ybar;
    std::size_t g = 0;
    const auto dense = lmm::densify_groups(in.group, &g);
    const auto m = lmm::compute_moments(xc, yc, dense, g);
    CHECK(lmm::reml_objective(m, f.lambda) == doctest::Approx(f.loglik).epsilon(1e-12));
    CHECK(f.loglik >= lmm::reml_objective(m, 0.0) - 1e-12);
    for (double lam : lmm::lambda_grid()) CHECK(f.loglik >= lmm::reml_objective(m, lam) - 1e-12);
  }
}

TEST_CASE("slope test is shift invariant and scale equivariant") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Instance in = grouped_instance(200 + seed);
    const LmmFit base = fit_random_intercept(in.x, in.y, in.group);
    std::vector<double> shifted(in.x), scaled(in.x);
    for (auto& v : shifted) v += 17.25;
    for (auto& v : scaled) v *= 3.5;
    const LmmFit s = fit_random_intercept(shifted, in.y, in.group);
    const LmmFit a = fit_random_intercept(scaled, in.y, in.group);
    CHECK(std::fabs(s.beta1 - base.beta1) <= 1e-10);
    CHECK(std::fabs(s.t_stat - base.t_stat) <= 1e-10);
    CHECK(std::fabs(s.p_value - base.p_value) <= 1e-10);
    CHECK(s.beta0 == doctest::Approx(base.beta0 - 17.25 * base.beta1).epsilon(1e-9));
    CHECK(std::fabs(a.beta1 - base.beta1 / 3.5) <= 1e-10);
    CHECK(std::fabs(a.t_stat - base.t_stat) <= 1e-10);
    CHECK(std::fabs(a.p_value - base.p_value) <= 1e-10);
  }
}

TEST_CASE("group labels are only identities") {
  const Instance in = grouped_instance(77);
  std::vector<int> relabeled(in.group);
  for (auto& g : relabeled) g = 1000 - g;
  const LmmFit a = fit_random_intercept(in.x, in.y, in.group);
  const LmmFit b = fit_random_intercept(in.x, in.y, relabeled);
  CHECK(a.t_stat == doctest::Approx(b.t_stat).epsilon(1e-12));
  CHECK(a.n_groups == 10);
}

}
