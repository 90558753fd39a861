#include <doctest.h>

#include <cmath>
#include <numeric>

#include "tehtree/error.hpp"
#include "tehtree/prognostic.hpp"
#include "tehtree/rng.hpp"
#include "tehtree/simgen.hpp"

using namespace tehtree;

namespace {

Eigen::MatrixXd normal_matrix(Rng& rng, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = rng.normal();
  }
  return x;
}

double linear_truth(const Eigen::MatrixXd& x, Eigen::Index i) {
  double v = kIntercept;
  for (Eigen::Index j = 0; j < 5; ++j) v += kPrognosticBeta[static_cast<std::size_t>(j)] * x(i, j);
  return v;
}

}  // namespace

TEST_SUITE("prognostic") {

TEST_CASE("constant outcomes give constant predictions everywhere") {
  Rng rng(1);
  const Eigen::MatrixXd x = normal_matrix(rng, 60, 3);
  const std::vector<double> y(60, 3.0);
  const PrognosticModel m = fit_prognostic(x, y, 10, 7);
  const Eigen::MatrixXd q = normal_matrix(rng, 25, 3) * 4.0;
  for (const auto& learner : m.learners) {
    std::vector<double> out(25);
    learner->predict(q, out);
    for (double v : out) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));
  }
  for (double v : predict_prognostic(m, q)) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));
  for (double r : m.cv_risk) CHECK(r == doctest::Approx(0.0).epsilon(1e-20));
}

TEST_CASE("noiseless linear outcome puts the weight on the linear learner") {
  Rng rng(2);
  const Eigen::MatrixXd x = normal_matrix(rng, 200, 5);
  std::vector<double> y(200);
  for (Eigen::Index i = 0; i < 200; ++i) y[static_cast<std::size_t>(i)] = linear_truth(x, i);
  const PrognosticModel m = fit_prognostic(x, y, 10, 3);
  const auto roster = m.roster();
  const auto lin = static_cast<std::size_t>(
      std::find(roster.begin(), roster.end(), LearnerKind::linear) - roster.begin());
  REQUIRE(lin < roster.size());
  CHECK(m.cv_risk[lin] < 1e-6);
  CHECK(m.weights[lin] > 0.99);

  const Eigen::MatrixXd q = normal_matrix(rng, 50, 5);
  const auto pred = predict_prognostic(m, q);
  for (Eigen::Index i = 0; i < 50; ++i) {
    CHECK(std::fabs(pred[static_cast<std::size_t>(i)] - linear_truth(q, i)) < 1e-3);
  }
  const auto at_zero = predict_prognostic(m, Eigen::MatrixXd::Zero(1, 5));
  CHECK(std::fabs(at_zero[0] - 0.8) < 1e-3);
}

TEST_CASE("weights lie on the simplex and stacking beats every learner") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const Eigen::Index n = 40 + static_cast<Eigen::Index>(rng.uniform_int(80));
    const Eigen::MatrixXd x = normal_matrix(rng, n, 4);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      y[static_cast<std::size_t>(i)] =
          std::sin(2.0 * x(i, 0)) + (x(i, 1) > 0 ? 1.0 : 0.0) + 0.5 * x(i, 2) * x(i, 3) + rng.normal();
    }
    const PrognosticModel m = fit_prognostic(x, y, 5, seed);
    double sum = 0.0;
    for (double w : m.weights) {
      CHECK(w >= 0.0);
      sum += w;
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-10);
    CHECK(m.weights.size() == m.learners.size());
    CHECK(m.cv_risk.size() == m.learners.size());
    const double best = *std::min_element(m.cv_risk.begin(), m.cv_risk.end());
    CHECK(m.ensemble_cv_risk <= best + 1e-8);
  }
}

TEST_CASE("predictions follow query rows under permutation") {
  Rng rng(4);
  const Eigen::MatrixXd x = normal_matrix(rng, 80, 3);
  std::vector<double> y(80);
  for (Eigen::Index i = 0; i < 80; ++i) y[static_cast<std::size_t>(i)] = x(i, 0) * x(i, 1) + rng.normal();
  const PrognosticModel m = fit_prognostic(x, y, 10, 1);
  const Eigen::MatrixXd q = normal_matrix(rng, 30, 3);
  std::vector<Eigen::Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Eigen::MatrixXd qp(30, 3);
  for (Eigen::Index i = 0; i < 30; ++i) qp.row(i) = q.row(perm[static_cast<std::size_t>(i)]);
  const auto a = predict_prognostic(m, q);
  const auto b = predict_prognostic(m, qp);
  for (Eigen::Index i = 0; i < 30; ++i) {
    CHECK(b[static_cast<std::size_t>(i)] == a[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
  }
}

TEST_CASE("fit is bitwise reproducible for a fixed seed") {
  Rng rng(5);
  const Eigen::MatrixXd x = normal_matrix(rng, 70, 4);
  std::vector<double> y(70);
  for (auto& v : y) v = rng.normal();
  const auto a = fit_prognostic(x, y, 10, 42);
  const auto b = fit_prognostic(x, y, 10, 42);
  CHECK(a.weights == b.weights);
  CHECK(a.cv_risk == b.cv_risk);
  CHECK(predict_prognostic(a, x) == predict_prognostic(b, x));
}

TEST_CASE("a unit weight reproduces that learner exactly") {
  Rng rng(6);
  const Eigen::MatrixXd x = normal_matrix(rng, 60, 2);
  std::vector<double> y(60);
  for (auto& v : y) v = rng.normal();
  PrognosticModel m = fit_prognostic(x, y, 10, 1);
  std::fill(m.weights.begin(), m.weights.end(), 0.0);
  m.weights[0] = 1.0;
  std::vector<double> direct(60);
  m.learners[0]->predict(x, direct);
  CHECK(predict_prognostic(m, x) == direct);
}

TEST_CASE("interaction learner is skipped when the design is too wide") {
  CHECK(interaction_term_count(5) == 1 + 5 + 10);
  Rng rng(7);
  const Eigen::MatrixXd x = normal_matrix(rng, 30, 5);
  std::vector<double> y(30);
  for (auto& v : y) v = rng.normal();
  const auto roster = fit_prognostic(x, y, 10, 1).roster();
  CHECK(std::find(roster.begin(), roster.end(), LearnerKind::linear_interactions) == roster.end());
  CHECK(roster.size() == 4);
}

TEST_CASE("simplex least squares solves small problems exactly") {
  Eigen::MatrixXd z(4, 2);
  z << 1, 0, 0, 1, 1, 0, 0, 1;
  const std::vector<double> y{1, 0, 1, 0};
  const auto w = simplex_least_squares(z, y);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(0.0));
  const std::vector<double> half{0.5, 0.5, 0.5, 0.5};
  const auto h = simplex_least_squares(z, half);
  CHECK(h[0] == doctest::Approx(0.5));
  CHECK(h[1] == doctest::Approx(0.5));
}

TEST_CASE("errors") {
  Rng rng(8);
  const Eigen::MatrixXd x = normal_matrix(rng, 15, 2);
  std::vector<double> y(15, 1.0);
  CHECK_THROWS_AS(fit_prognostic(x, y, 10, 1), ValidationError);
  const Eigen::MatrixXd x2 = normal_matrix(rng, 40, 2);
  std::vector<double> y2(40, 1.0);
  const auto m = fit_prognostic(x2, y2, 10, 1);
  CHECK_THROWS_AS(predict_prognostic(m, Eigen::MatrixXd::Zero(3, 3)), ValidationError);
}

}
