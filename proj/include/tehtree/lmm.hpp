#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tehtree {

// Random-intercept fit of delta = beta0 + beta1 * x + b_group + e by REML.
struct LmmFit {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double sigma2 = 0.0;   // residual variance
  double tau2 = 0.0;     // random-intercept variance
  double lambda = 0.0;   // tau2 / sigma2 at the optimum
  double se_beta1 = 0.0;
  double t_stat = 0.0;
  int df = 1;
  double p_value = 1.0;
  double loglik = 0.0;   // REML log-likelihood at the optimum
  std::size_t n_groups = 0;
};

// Throws DegenerateRegressor when x is constant and ValidationError when n < 4
// or the inputs disagree in length.
LmmFit fit_random_intercept(std::span<const double> x, std::span<const double> delta,
                            std::span<const int> group);

// Two-sided p-value of a t statistic with df degrees of freedom.
double two_sided_t_pvalue(double t, int df);

namespace lmm {

// Groups sharing a size contribute to the REML profile only through these sums,
// so the profile is evaluated per size class rather than per group.
struct SizeClass {
  double size = 0.0;   // observations per group
  double count = 0.0;  // groups of this size
  double sx = 0.0;     // sum over groups of the group's x-sum
  double sy = 0.0;
  double sxx = 0.0;    // sum over groups of (x-sum)^2
  double sxy = 0.0;    // sum over groups of x-sum * y-sum
  double syy = 0.0;
};

struct Moments {
  double n = 0.0;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;  // observation-level sums
  std::vector<SizeClass> classes;
  std::size_t n_groups = 0;
};

// Dense group ids (0..n_groups-1) in order of first appearance.
std::vector<int> densify_groups(std::span<const int> group, std::size_t* n_groups);

// Moments of (x, y) with the given dense group ids.
Moments compute_moments(std::span<const double> x, std::span<const double> y,
                        std::span<const int> dense_group, std::size_t n_groups);

// Profiled REML log-likelihood at lambda = tau2 / sigma2 (lambda >= 0).
double reml_objective(const Moments& m, double lambda);

// Maximizes the profile over lambda and reports the slope test. x_shift and
// y_shift are the offsets subtracted from x and y before computing the moments;
// they only affect the reported intercept.
LmmFit fit_from_moments(const Moments& m, double x_shift = 0.0, double y_shift = 0.0);

// Lambda search bracket and the log-spaced grid used to seed the golden search.
inline constexpr double kLambdaMin = 1e-8;
inline constexpr double kLambdaMax = 1e8;
inline constexpr int kGridPoints = 64;
std::vector<double> lambda_grid();

}  // namespace lmm
}  // namespace tehtree
