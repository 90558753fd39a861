#pragma once
// Brute-force reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "tehtree/lmm.hpp"
#include "tehtree/matching.hpp"
#include "tehtree/rng.hpp"
#include "tehtree/tree.hpp"

namespace oracle {

struct DenseReml {
  double sigma2 = 0.0;
  double tau2 = 0.0;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double loglik = -std::numeric_limits<double>::infinity();
};

// REML log-likelihood with the full n x n covariance sigma2*I + tau2*Z*Z'.
inline double dense_reml_loglik(const std::vector<double>& x, const std::vector<double>& y,
                                const std::vector<int>& group, double sigma2, double tau2,
                                Eigen::Vector2d* beta = nullptr) {
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) * sigma2;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)]) v(i, j) += tau2;
    }
  }
  Eigen::MatrixXd xm(n, 2);
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xm(i, 0) = 1.0;
    xm(i, 1) = x[static_cast<std::size_t>(i)];
    yv(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(v);
  const Eigen::MatrixXd vinv_x = llt.solve(xm);
  const Eigen::VectorXd vinv_y = llt.solve(yv);
  const Eigen::Matrix2d xtvx = xm.transpose() * vinv_x;
  const Eigen::Vector2d b = xtvx.ldlt().solve(xm.transpose() * vinv_y);
  const Eigen::VectorXd r = yv - xm * b;
  const double quad = r.dot(llt.solve(r));
  double logdet_v = 0.0;
  const Eigen::MatrixXd l = llt.matrixL();
  for (Eigen::Index i = 0; i < n; ++i) logdet_v += 2.0 * std::log(l(i, i));
  const double logdet_xtvx = std::log(xtvx.determinant());
  if (beta) *beta = b;
  const double two_pi = 2.0 * 3.14159265358979323846;
  return -0.5 * (static_cast<double>(n - 2) * std::log(two_pi) + logdet_v + logdet_xtvx + quad);
}

template <typename F>
double golden_max(F&& f, double lo, double hi, int iters = 200) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < iters && (b - a) > 1e-12 * (1.0 + std::fabs(a) + std::fabs(b)); ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Maximizes the dense REML likelihood over (log sigma2, tau2) without using any
// closed-form profiling: coarse grid over both, then nested golden refinement.
inline DenseReml dense_reml_fit(const std::vector<double>& x, const std::vector<double>& y,
                                const std::vector<int>& group) {
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - ybar) * (v - ybar);
  var = std::max(var / static_cast<double>(y.size()), 1e-12);
  const double ls_lo = std::log(var) - 12.0, ls_hi = std::log(var) + 4.0;

  // Best sigma2 for a fixed tau2, by golden search on log sigma2.
  const auto best_for_tau = [&](double tau2, double* ls_out) {
    double best_ls = ls_lo, best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 64; ++k) {
      const double ls = ls_lo + (ls_hi - ls_lo) * k / 64.0;
      const double v = dense_reml_loglik(x, y, group, std::exp(ls), tau2);
      if (v > best) {
        best = v;
        best_ls = ls;
      }
    }
    const double step = (ls_hi - ls_lo) / 64.0;
    const double ls = golden_max(
        [&](double t) { return dense_reml_loglik(x, y, group, std::exp(t), tau2); },
        best_ls - step, best_ls + step);
    if (ls_out) *ls_out = ls;
    return dense_reml_loglik(x, y, group, std::exp(ls), tau2);
  };

  // tau2 is searched on log scale; tau2 = 0 is compared separately.
  const double lt_lo = std::log(var) - 20.0, lt_hi = std::log(var) + 6.0;
  double best_lt = lt_lo, best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 80; ++k) {
    const double lt = lt_lo + (lt_hi - lt_lo) * k / 80.0;
    const double v = best_for_tau(std::exp(lt), nullptr);
    if (v > best) {
      best = v;
      best_lt = lt;
    }
  }
  const double step = (lt_hi - lt_lo) / 80.0;
  const double lt = golden_max([&](double t) { return best_for_tau(std::exp(t), nullptr); },
                               best_lt - step, best_lt + step, 120);
  DenseReml out;
  double ls = 0.0;
  out.loglik = best_for_tau(std::exp(lt), &ls);
  out.tau2 = std::exp(lt);
  out.sigma2 = std::exp(ls);
  double ls0 = 0.0;
  const double at_zero = best_for_tau(0.0, &ls0);
  if (at_zero >= out.loglik) {
    out.loglik = at_zero;
    out.tau2 = 0.0;
    out.sigma2 = std::exp(ls0);
  }
  Eigen::Vector2d b;
  dense_reml_loglik(x, y, group, out.sigma2, out.tau2, &b);
  out.beta0 = b(0);
  out.beta1 = b(1);
  return out;
}

struct OlsTest {
  double beta0, beta1, t, p;
};

inline OlsTest ols_slope_test(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double b1 = sxy / sxx;
  const double b0 = my - b1 * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - b0 - b1 * x[i];
    rss += e * e;
  }
  const double se = std::sqrt(rss / (n - 2.0) / sxx);
  const double t = b1 / se;
  boost::math::students_t dist(n - 2.0);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return {b0, b1, t, p};
}

// Exhaustive nearest-control scan per treated row, with the same random tie rule:
// tied controls sorted by row index, one drawn from the treated row's own stream.
inline std::vector<tehtree::MatchedPair> brute_force_match(const std::vector<int>& z,
                                                           const std::vector<double>& scores,
                                                           std::uint64_t seed) {
  std::vector<tehtree::MatchedPair> out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] != 1) continue;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (z[j] == 0) best = std::min(best, std::fabs(scores[i] - scores[j]));
    }
    std::vector<std::size_t> tied;
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (z[j] == 0 && std::fabs(scores[i] - scores[j]) <= best + tehtree::kMatchTieTolerance) {
        tied.push_back(j);
      }
    }
    std::size_t pick = tied.front();
    if (tied.size() > 1) {
      tehtree::Rng rng(tehtree::derive_seed(seed, {0x3a7c4u, static_cast<std::uint64_t>(i)}));
      pick = tied[static_cast<std::size_t>(rng.uniform_int(tied.size()))];
    }
    out.push_back({i, pick});
  }
  return out;
}

// Every feasible midpoint refit from scratch; largest |t| wins, ties go to the
// midpoint nearest the node median, then to the smaller threshold.
inline std::optional<double> exhaustive_split(const std::vector<double>& x,
                                              const std::vector<double>& delta,
                                              const std::vector<int>& group, int min_node) {
  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::optional<double> best_c;
  double best_t = -1.0;
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
    const double c = 0.5 * (sorted[k] + sorted[k + 1]);
    std::vector<double> ind(n);
    std::size_t upper = 0;
    for (std::size_t i = 0; i < n; ++i) {
      ind[i] = x[i] > sorted[k] ? 1.0 : 0.0;
      upper += x[i] > sorted[k];
    }
    if (upper < static_cast<std::size_t>(min_node) || n - upper < static_cast<std::size_t>(min_node)) {
      continue;
    }
    const double t = std::fabs(tehtree::fit_random_intercept(ind, delta, group).t_stat);
    if (std::isnan(t)) continue;
    bool take = !best_c;
    if (best_c) {
      const bool tie = std::fabs(t - best_t) <= tehtree::kSplitTieTolerance * std::max(t, best_t);
      if (tie) {
        const double a = std::fabs(c - median), b = std::fabs(*best_c - median);
        take = a < b || (a == b && c < *best_c);
      } else {
        take = t > best_t;
      }
    }
    if (take) {
      best_c = c;
      best_t = t;
    }
  }
  return best_c;
}

}  // namespace oracle
