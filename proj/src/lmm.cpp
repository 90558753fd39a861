#include "tehtree/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <boost/math/distributions/students_t.hpp>

#include "tehtree/error.hpp"

namespace tehtree {

double two_sided_t_pvalue(double t, int df) {
  if (std::isnan(t)) return 1.0;
  const double a = std::fabs(t);
  if (std::isinf(a)) return 0.0;
  const boost::math::students_t_distribution<double> dist(static_cast<double>(std::max(df, 1)));
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, a));
  return std::clamp(p, 0.0, 1.0);
}

namespace lmm {

std::vector<double> lambda_grid() {
  std::vector<double> grid(kGridPoints);
  const double lo = std::log(kLambdaMin);
  const double hi = std::log(kLambdaMax);
  for (int k = 0; k < kGridPoints; ++k) {
    grid[k] = std::exp(lo + (hi - lo) * k / (kGridPoints - 1));
  }
  return grid;
}

std::vector<int> densify_groups(std::span<const int> group, std::size_t* n_groups) {
  std::vector<int> sorted(group.begin(), group.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  // Dense ids follow first appearance so the mapping does not depend on id values.
  std::vector<int> first(sorted.size(), -1);
  std::vector<int> dense(group.size());
  int next = 0;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), group[i]) - sorted.begin());
    if (first[k] < 0) first[k] = next++;
    dense[i] = first[k];
  }
  if (n_groups) *n_groups = sorted.size();
  return dense;
}

Moments compute_moments(std::span<const double> x, std::span<const double> y,
                        std::span<const int> dense_group, std::size_t n_groups) {
  Moments m;
  m.n = static_cast<double>(x.size());
  m.n_groups = n_groups;
  std::vector<double> gsize(n_groups, 0.0), gx(n_groups, 0.0), gy(n_groups, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = y[i];
    m.sx += xi;
    m.sy += yi;
    m.sxx += xi * xi;
    m.sxy += xi * yi;
    m.syy += yi * yi;
    const auto g = static_cast<std::size_t>(dense_group[i]);
    gsize[g] += 1.0;
    gx[g] += xi;
    gy[g] += yi;
  }
  for (std::size_t g = 0; g < n_groups; ++g) {
    auto it = std::find_if(m.classes.begin(), m.classes.end(),
                           [&](const SizeClass& c) { return c.size == gsize[g]; });
    if (it == m.classes.end()) {
      m.classes.push_back(SizeClass{gsize[g]});
      it = m.classes.end() - 1;
    }
    it->count += 1.0;
    it->sx += gx[g];
    it->sy += gy[g];
    it->sxx += gx[g] * gx[g];
    it->sxy += gx[g] * gy[g];
    it->syy += gy[g] * gy[g];
  }
  std::sort(m.classes.begin(), m.classes.end(),
            [](const SizeClass& a, const SizeClass& b) { return a.size < b.size; });
  return m;
}

namespace {

// Generalized least squares quantities at a fixed lambda.
struct Gls {
  double a00, a01, a11, det;
  double beta0, beta1;
  double rss;
  double logdet_h;
};

Gls gls_at(const Moments& m, double lambda) {
  double a00 = m.n, a01 = m.sx, a11 = m.sxx;
  double b0 = m.sy, b1 = m.sxy, yy = m.syy;
  double logdet = 0.0;
  if (lambda > 0.0) {
    for (const SizeClass& c : m.classes) {
      const double w = lambda / (1.0 + lambda * c.size);
      a00 -= w * c.size * c.size * c.count;
      a01 -= w * c.size * c.sx;
      a11 -= w * c.sxx;
      b0 -= w * c.size * c.sy;
      b1 -= w * c.sxy;
      yy -= w * c.syy;
      logdet += c.count * std::log1p(lambda * c.size);
    }
  }
  Gls g{};
  g.a00 = a00;
  g.a01 = a01;
  g.a11 = a11;
  g.det = a00 * a11 - a01 * a01;
  g.beta0 = (a11 * b0 - a01 * b1) / g.det;
  g.beta1 = (a00 * b1 - a01 * b0) / g.det;
  g.rss = std::max(0.0, yy - (g.beta0 * b0 + g.beta1 * b1));
  g.logdet_h = logdet;
  return g;
}

double objective_from(const Gls& g, double n) {
  if (!(g.det > 0.0)) return -std::numeric_limits<double>::infinity();
  const double dof = n - 2.0;
  const double sigma2 = g.rss / dof;
  const double v = -0.5 * (dof * (std::log(2.0 * std::numbers::pi * sigma2) + 1.0) + g.logdet_h +
                           std::log(g.det));
  return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
}

// d(objective)/d(log lambda), from the derivatives of the GLS sums in lambda.
double log_lambda_slope(const Moments& m, double lambda) {
  const Gls g = gls_at(m, lambda);
  if (!(g.det > 0.0) || !(g.rss > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  double d00 = 0.0, d01 = 0.0, d11 = 0.0, db0 = 0.0, db1 = 0.0, dyy = 0.0, dlogdet = 0.0;
  for (const SizeClass& c : m.classes) {
    const double q = 1.0 + lambda * c.size;
    const double dw = 1.0 / (q * q);
    d00 -= dw * c.size * c.size * c.count;
    d01 -= dw * c.size * c.sx;
    d11 -= dw * c.sxx;
    db0 -= dw * c.size * c.sy;
    db1 -= dw * c.sxy;
    dyy -= dw * c.syy;
    dlogdet += c.count * c.size / q;
  }
  const double ddet = d00 * g.a11 + g.a00 * d11 - 2.0 * g.a01 * d01;
  const double drss = dyy - 2.0 * (g.beta0 * db0 + g.beta1 * db1) +
                      (g.beta0 * g.beta0 * d00 + 2.0 * g.beta0 * g.beta1 * d01 + g.beta1 * g.beta1 * d11);
  const double dl = -0.5 * ((m.n - 2.0) * drss / g.rss + dlogdet + ddet / g.det);
  return lambda * dl;
}

// Bisection on the sign of the slope in log lambda; empty without a sign change.
std::optional<double> polish(const Moments& m, double lo_t, double hi_t) {
  double s_lo = log_lambda_slope(m, std::exp(lo_t));
  double s_hi = log_lambda_slope(m, std::exp(hi_t));
  if (!(s_lo > 0.0 && s_hi < 0.0)) return std::nullopt;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo_t + hi_t);
    if (mid <= lo_t || mid >= hi_t) break;
    const double s = log_lambda_slope(m, std::exp(mid));
    if (std::isnan(s)) return std::nullopt;
    if (s > 0.0) {
      lo_t = mid;
    } else if (s < 0.0) {
      hi_t = mid;
    } else {
      return mid;
    }
  }
  return 0.5 * (lo_t + hi_t);
}

}  // namespace

double reml_objective(const Moments& m, double lambda) {
  return objective_from(gls_at(m, lambda), m.n);
}

LmmFit fit_from_moments(const Moments& m, double x_shift, double y_shift) {
  const auto nobs = static_cast<std::size_t>(m.n);
  double best_lambda = 0.0;
  double best = reml_objective(m, 0.0);

  // With only singleton groups the random intercept is confounded with the
  // residual and the profile is flat; the boundary is reported.
  if (m.n_groups < nobs) {
    const std::vector<double> grid = lambda_grid();
    std::vector<double> values(grid.size());
    std::size_t k_best = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      values[k] = reml_objective(m, grid[k]);
      if (values[k] > values[k_best]) k_best = k;
    }
    if (values[k_best] > best) {
      best = values[k_best];
      best_lambda = grid[k_best];
    }

    const double lo_t = std::log(grid[k_best == 0 ? 0 : k_best - 1]);
    const double hi_t = std::log(grid[std::min(k_best + 1, grid.size() - 1)]);
    if (hi_t > lo_t) {
      const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
      double a = lo_t, b = hi_t;
      double c = b - inv_phi * (b - a);
      double d = a + inv_phi * (b - a);
      double fc = reml_objective(m, std::exp(c));
      double fd = reml_objective(m, std::exp(d));
      while (b - a > 1e-8 * std::max(1.0, std::fabs(a) + std::fabs(b))) {
        if (fc >= fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - inv_phi * (b - a);
          fc = reml_objective(m, std::exp(c));
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + inv_phi * (b - a);
          fd = reml_objective(m, std::exp(d));
        }
      }
      // Golden section pins lambda only to the square root of machine precision;
      // the slope root sharpens it so the fit is stable under rescaling of x.
      double t = 0.5 * (a + b);
      if (auto root = polish(m, a, b)) {
        t = *root;
      } else if (auto wide = polish(m, lo_t, hi_t)) {
        t = *wide;
      }
      const double ft = reml_objective(m, std::exp(t));
      if (ft > best) {
        best = ft;
        best_lambda = std::exp(t);
      }
    }
  }

  const Gls g = gls_at(m, best_lambda);
  LmmFit fit;
  fit.n_groups = m.n_groups;
  fit.lambda = best_lambda;
  fit.loglik = best;
  fit.beta1 = g.beta1;
  fit.beta0 = g.beta0 + y_shift - g.beta1 * x_shift;
  fit.sigma2 = g.rss / (m.n - 2.0);
  fit.tau2 = best_lambda * fit.sigma2;
  const double var1 = fit.sigma2 * g.a00 / g.det;
  fit.se_beta1 = var1 > 0.0 ? std::sqrt(var1) : 0.0;
  if (fit.se_beta1 > 0.0) {
    fit.t_stat = fit.beta1 / fit.se_beta1;
  } else {
    fit.t_stat = fit.beta1 == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), fit.beta1);
  }
  if (m.n_groups >= nobs) {
    fit.df = static_cast<int>(nobs) - 2;
  } else {
    fit.df = std::max(1, static_cast<int>(nobs) - static_cast<int>(m.n_groups) - 1);
  }
  fit.p_value = two_sided_t_pvalue(fit.t_stat, fit.df);
  return fit;
}

}  // namespace lmm

LmmFit fit_random_intercept(std::span<const double> x, std::span<const double> delta,
                            std::span<const int> group) {
  const std::size_t n = x.size();
  if (delta.size() != n || group.size() != n) {
    throw ValidationError("lmm: x, delta and group must have equal length");
  }
  if (n < 4) throw ValidationError("lmm: at least 4 observations required");

  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  if (*xmin == *xmax) throw DegenerateRegressor("lmm: regressor is constant");

  std::size_t n_groups = 0;
  const std::vector<int> dense = lmm::densify_groups(group, &n_groups);

  const auto [dmin, dmax] = std::minmax_element(delta.begin(), delta.end());
  if (*dmin == *dmax) {
    LmmFit fit;
    fit.beta0 = delta[0];
    fit.n_groups = n_groups;
    fit.df = n_groups >= n ? static_cast<int>(n) - 2
                           : std::max(1, static_cast<int>(n) - static_cast<int>(n_groups) - 1);
    fit.p_value = 1.0;
    fit.loglik = std::numeric_limits<double>::infinity();
    return fit;
  }

  double xbar = 0.0, dbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    xbar += x[i];
    dbar += delta[i];
  }
  xbar /= static_cast<double>(n);
  dbar /= static_cast<double>(n);
  std::vector<double> xc(n), dc(n);
  for (std::size_t i = 0; i < n; ++i) {
    xc[i] = x[i] - xbar;
    dc[i] = delta[i] - dbar;
  }
  const lmm::Moments m = lmm::compute_moments(xc, dc, dense, n_groups);
  return lmm::fit_from_moments(m, xbar, dbar);
}

}  // namespace tehtree
