#include "tehtree/prognostic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "tehtree/error.hpp"
#include "tehtree/kernels.hpp"
#include "tehtree/rng.hpp"

namespace tehtree {

const char* to_string(LearnerKind kind) noexcept {
  switch (kind) {
    case LearnerKind::mean:
      return "mean";
    case LearnerKind::linear:
      return "linear";
    case LearnerKind::linear_interactions:
      return "linear_interactions";
    case LearnerKind::bagged_stumps:
      return "bagged_stumps";
    case LearnerKind::knn:
      return "knn";
  }
  return "unknown";
}

std::size_t interaction_term_count(std::size_t p) noexcept { return 1 + p + p * (p - 1) / 2; }

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x) {
    Standardizer s;
    const double n = static_cast<double>(x.rows());
    s.mean = x.colwise().mean().transpose();
    s.scale.resize(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double var = (x.col(c).array() - s.mean(c)).square().sum() / std::max(1.0, n - 1.0);
      s.scale(c) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  RowMatrix apply(const Eigen::MatrixXd& x) const {
    RowMatrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean(c)) / scale(c);
    }
    return out;
  }
};

class MeanLearner final : public Learner {
 public:
  MeanLearner(double value, std::size_t dim) : value_(value), dim_(dim) {}
  LearnerKind kind() const noexcept override { return LearnerKind::mean; }
  std::size_t dim() const noexcept override { return dim_; }
  void predict(const Eigen::MatrixXd&, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), value_);
  }

 private:
  double value_;
  std::size_t dim_;
};

// Main effects, optionally followed by all pairwise products x_a * x_b (a < b).
RowMatrix expand_features(const Eigen::MatrixXd& x, bool interactions) {
  const Eigen::Index p = x.cols();
  const Eigen::Index terms = interactions ? p + p * (p - 1) / 2 : p;
  RowMatrix f(x.rows(), terms);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::Index k = 0;
    for (Eigen::Index a = 0; a < p; ++a) f(r, k++) = x(r, a);
    if (interactions) {
      for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = a + 1; b < p; ++b) f(r, k++) = x(r, a) * x(r, b);
      }
    }
  }
  return f;
}

// Least squares on centered features with a ridge of 1e-8 * trace(F'F); the
// intercept is not penalized.
class LinearLearner final : public Learner {
 public:
  LinearLearner(const Eigen::MatrixXd& x, std::span<const double> y, bool interactions)
      : interactions_(interactions), dim_(static_cast<std::size_t>(x.cols())) {
    const RowMatrix f = expand_features(x, interactions);
    const Eigen::Index n = f.rows();
    const Eigen::Index k = f.cols();
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
    const double ybar = yv.mean();
    const Eigen::RowVectorXd fbar = f.colwise().mean();
    Eigen::MatrixXd fc = f.rowwise() - fbar;
    const Eigen::VectorXd yc = yv.array() - ybar;

    coef_ = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd gram = fc.transpose() * fc;
    const double trace = gram.trace();
    if (k > 0 && trace > 0.0) {
      gram.diagonal().array() += 1e-8 * trace;
      coef_ = gram.ldlt().solve(fc.transpose() * yc);
    }
    intercept_ = ybar - fbar.dot(coef_);
  }

  LearnerKind kind() const noexcept override {
    return interactions_ ? LearnerKind::linear_interactions : LearnerKind::linear;
  }
  std::size_t dim() const noexcept override { return dim_; }

  void predict(const Eigen::MatrixXd& x, std::span<double> out) const override {
    const RowMatrix f = expand_features(x, interactions_);
    const std::span<const double> coef(coef_.data(), static_cast<std::size_t>(coef_.size()));
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      const std::span<const double> row(f.data() + r * f.cols(), static_cast<std::size_t>(f.cols()));
      out[static_cast<std::size_t>(r)] = intercept_ + kernels::dot(row, coef);
    }
  }

 private:
  bool interactions_;
  std::size_t dim_;
  double intercept_ = 0.0;
  Eigen::VectorXd coef_;
};

// Bagged depth-one regression trees on standardized covariates; each stump sees
// a bootstrap resample and one uniformly drawn feature.
class StumpEnsemble final : public Learner {
 public:
  StumpEnsemble(const Eigen::MatrixXd& x, std::span<const double> y, std::uint64_t seed)
      : scaler_(Standardizer::fit(x)), dim_(static_cast<std::size_t>(x.cols())) {
    const RowMatrix xs = scaler_.apply(x);
    const std::size_t n = static_cast<std::size_t>(xs.rows());
    const std::size_t p = dim_;

    std::vector<std::vector<std::size_t>> order(p);
    for (std::size_t c = 0; c < p; ++c) {
      order[c].resize(n);
      std::iota(order[c].begin(), order[c].end(), std::size_t{0});
      std::stable_sort(order[c].begin(), order[c].end(), [&](std::size_t a, std::size_t b) {
        return xs(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c)) <
               xs(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c));
      });
    }

    Rng rng(seed);
    std::vector<double> counts(n);
    stumps_.reserve(kStumpCount);
    for (int s = 0; s < kStumpCount; ++s) {
      std::fill(counts.begin(), counts.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) counts[rng.uniform_int(n)] += 1.0;
      const std::size_t feature = p == 0 ? 0 : static_cast<std::size_t>(rng.uniform_int(p));

      double total_w = 0.0, total_s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        total_w += counts[i];
        total_s += counts[i] * y[i];
      }
      Stump stump{feature, std::numeric_limits<double>::infinity(), total_s / total_w,
                  total_s / total_w};
      if (p > 0) {
        const auto col = static_cast<Eigen::Index>(feature);
        double wl = 0.0, sl = 0.0;
        double best_gain = -std::numeric_limits<double>::infinity();
        double prev_value = 0.0;
        bool have_prev = false;
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t i = order[feature][k];
          if (counts[i] == 0.0) continue;
          const double v = xs(static_cast<Eigen::Index>(i), col);
          if (have_prev && v > prev_value && wl > 0.0 && total_w - wl > 0.0) {
            const double wr = total_w - wl;
            const double sr = total_s - sl;
            const double gain = sl * sl / wl + sr * sr / wr;
            if (gain > best_gain) {
              best_gain = gain;
              stump.threshold = 0.5 * (prev_value + v);
              stump.left = sl / wl;
              stump.right = sr / wr;
            }
          }
          wl += counts[i];
          sl += counts[i] * y[i];
          prev_value = v;
          have_prev = true;
        }
      }
      stumps_.push_back(stump);
    }
  }

  LearnerKind kind() const noexcept override { return LearnerKind::bagged_stumps; }
  std::size_t dim() const noexcept override { return dim_; }

  void predict(const Eigen::MatrixXd& x, std::span<double> out) const override {
    const RowMatrix xs = scaler_.apply(x);
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
      double s = 0.0;
      for (const Stump& st : stumps_) {
        const double v = dim_ == 0 ? 0.0 : xs(r, static_cast<Eigen::Index>(st.feature));
        s += v <= st.threshold ? st.left : st.right;
      }
      out[static_cast<std::size_t>(r)] = s / static_cast<double>(stumps_.size());
    }
  }

 private:
  struct Stump {
    std::size_t feature;
    double threshold;  // left iff value <= threshold
    double left;
    double right;
  };
  Standardizer scaler_;
  std::size_t dim_;
  std::vector<Stump> stumps_;
};

// k-nearest-neighbour mean on standardized covariates, k = ceil(sqrt(n)).
// Distance ties are resolved by training row order.
class KnnLearner final : public Learner {
 public:
  KnnLearner(const Eigen::MatrixXd& x, std::span<const double> y)
      : scaler_(Standardizer::fit(x)),
        refs_(scaler_.apply(x)),
        y_(y.begin(), y.end()),
        dim_(static_cast<std::size_t>(x.cols())) {
    const auto n = y_.size();
    k_ = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)))));
  }

  LearnerKind kind() const noexcept override { return LearnerKind::knn; }
  std::size_t dim() const noexcept override { return dim_; }

  void predict(const Eigen::MatrixXd& x, std::span<double> out) const override {
    const RowMatrix q = scaler_.apply(x);
    const std::size_t n = y_.size();
    std::vector<double> dist(n);
    std::vector<std::size_t> idx(n);
    const std::span<const double> refs(refs_.data(), static_cast<std::size_t>(refs_.size()));
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      const std::span<const double> row(q.data() + r * q.cols(), dim_);
      if (dim_ == 0) {
        std::fill(dist.begin(), dist.end(), 0.0);
      } else {
        kernels::squared_distances(row, refs, dist);
      }
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      const auto closer = [&](std::size_t a, std::size_t b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
      };
      std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_ - 1), idx.end(), closer);
      std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_), closer);
      double s = 0.0;
      for (std::size_t j = 0; j < k_; ++j) s += y_[idx[j]];
      out[static_cast<std::size_t>(r)] = s / static_cast<double>(k_);
    }
  }

 private:
  Standardizer scaler_;
  RowMatrix refs_;
  std::vector<double> y_;
  std::size_t dim_;
  std::size_t k_ = 1;
};

}  // namespace

std::shared_ptr<const Learner> fit_learner(LearnerKind kind, const Eigen::MatrixXd& x,
                                           std::span<const double> y, std::uint64_t seed) {
  if (static_cast<std::size_t>(x.rows()) != y.size() || y.empty()) {
    throw ValidationError("prognostic: learner needs matching, nonempty x and y");
  }
  switch (kind) {
    case LearnerKind::mean: {
      const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
      return std::make_shared<MeanLearner>(m, static_cast<std::size_t>(x.cols()));
    }
    case LearnerKind::linear:
      return std::make_shared<LinearLearner>(x, y, false);
    case LearnerKind::linear_interactions:
      return std::make_shared<LinearLearner>(x, y, true);
    case LearnerKind::bagged_stumps:
      return std::make_shared<StumpEnsemble>(x, y, seed);
    case LearnerKind::knn:
      return std::make_shared<KnnLearner>(x, y);
  }
  throw ValidationError("prognostic: unknown learner");
}

std::vector<LearnerKind> PrognosticModel::roster() const {
  std::vector<LearnerKind> out;
  for (const auto& l : learners) out.push_back(l->kind());
  return out;
}

std::vector<double> simplex_least_squares(const Eigen::MatrixXd& z, std::span<const double> y) {
  const Eigen::Index n = z.rows();
  const Eigen::Index m = z.cols();
  if (m == 0 || m > 20) throw ValidationError("stacking: unsupported learner count");
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::MatrixXd gram = z.transpose() * z;
  const Eigen::VectorXd zy = z.transpose() * yv;
  const double yy = yv.squaredNorm();
  const double tol = 1e-10 * (yv.array() - yv.mean()).square().sum();

  const auto objective = [&](const Eigen::VectorXd& w) {
    return std::max(0.0, yy - 2.0 * w.dot(zy) + w.dot(gram * w));
  };

  std::vector<unsigned> subsets;
  for (unsigned mask = 1; mask < (1u << m); ++mask) subsets.push_back(mask);
  std::stable_sort(subsets.begin(), subsets.end(), [](unsigned a, unsigned b) {
    return std::popcount(a) < std::popcount(b);
  });

  Eigen::VectorXd best_w;
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask : subsets) {
    std::vector<Eigen::Index> members;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (mask & (1u << j)) members.push_back(j);
    }
    const auto k = static_cast<Eigen::Index>(members.size());
    Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
    if (k == 1) {
      w(members[0]) = 1.0;
    } else {
      // Stationarity of the Lagrangian restricted to the subset.
      Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(k + 1, k + 1);
      Eigen::VectorXd rhs(k + 1);
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) kkt(a, b) = gram(members[a], members[b]);
        kkt(a, k) = 1.0;
        kkt(k, a) = 1.0;
        rhs(a) = zy(members[a]);
      }
      rhs(k) = 1.0;
      const Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
      if (!lu.isInvertible()) continue;
      const Eigen::VectorXd sol = lu.solve(rhs);
      bool interior = true;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (!(sol(a) > 0.0)) interior = false;
        w(members[a]) = sol(a);
      }
      if (!interior) continue;
    }
    const double obj = objective(w);
    if (obj < best - tol || best_w.size() == 0) {
      best = obj;
      best_w = w;
    }
  }
  const double total = best_w.sum();
  std::vector<double> out(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] = best_w(j) / total;
  return out;
}

PrognosticModel fit_prognostic(const Eigen::MatrixXd& x, std::span<const double> y, int folds,
                               std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (folds < 2) throw ValidationError("prognostic: folds must be at least 2");
  if (y.size() != n) throw ValidationError("prognostic: x and y row counts differ");
  if (n < 2 * static_cast<std::size_t>(folds)) {
    throw ValidationError("prognostic: control arm has " + std::to_string(n) +
                          " subjects; need at least " + std::to_string(2 * folds));
  }

  std::vector<LearnerKind> roster{LearnerKind::mean, LearnerKind::linear};
  if (2 * interaction_term_count(static_cast<std::size_t>(x.cols())) < n) {
    roster.push_back(LearnerKind::linear_interactions);
  }
  roster.push_back(LearnerKind::bagged_stumps);
  roster.push_back(LearnerKind::knn);
  const auto m = roster.size();

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng fold_rng(derive_seed(seed, {0xf01du}));
  fold_rng.shuffle(perm);
  std::vector<int> fold_of(n);
  for (std::size_t k = 0; k < n; ++k) fold_of[perm[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));

  Eigen::MatrixXd cv_pred(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (int f = 0; f < folds; ++f) {
    std::vector<Eigen::Index> in_rows, out_rows;
    for (std::size_t i = 0; i < n; ++i) {
      (fold_of[i] == f ? out_rows : in_rows).push_back(static_cast<Eigen::Index>(i));
    }
    const Eigen::MatrixXd x_in = x(in_rows, Eigen::all);
    const Eigen::MatrixXd x_out = x(out_rows, Eigen::all);
    std::vector<double> y_in(in_rows.size());
    for (std::size_t k = 0; k < in_rows.size(); ++k) y_in[k] = y[static_cast<std::size_t>(in_rows[k])];
    std::vector<double> pred(out_rows.size());
    for (std::size_t j = 0; j < m; ++j) {
      const auto learner = fit_learner(
          roster[j], x_in, y_in,
          derive_seed(seed, {static_cast<std::uint64_t>(roster[j]), static_cast<std::uint64_t>(f)}));
      learner->predict(x_out, pred);
      for (std::size_t k = 0; k < out_rows.size(); ++k) {
        cv_pred(out_rows[k], static_cast<Eigen::Index>(j)) = pred[k];
      }
    }
  }

  PrognosticModel model;
  model.dim = static_cast<std::size_t>(x.cols());
  model.cv_risk.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = y[i] - cv_pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      s += r * r;
    }
    model.cv_risk[j] = s / static_cast<double>(n);
  }
  model.weights = simplex_least_squares(cv_pred, y);
  {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double e = y[i];
      for (std::size_t j = 0; j < m; ++j) {
        e -= model.weights[j] * cv_pred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
      s += e * e;
    }
    model.ensemble_cv_risk = s / static_cast<double>(n);
  }
  for (std::size_t j = 0; j < m; ++j) {
    model.learners.push_back(fit_learner(
        roster[j], x, y,
        derive_seed(seed, {static_cast<std::uint64_t>(roster[j]), static_cast<std::uint64_t>(folds)})));
  }
  return model;
}

PrognosticModel fit_prognostic(const TrialDataset& data, std::span<const std::size_t> rows,
                               int folds, std::uint64_t seed) {
  std::vector<Eigen::Index> controls;
  for (std::size_t r : rows) {
    if (r >= data.n()) throw ValidationError("prognostic: row index out of range");
    if (data.z()[r] == 0) controls.push_back(static_cast<Eigen::Index>(r));
  }
  const Eigen::MatrixXd x = data.x()(controls, Eigen::all);
  std::vector<double> y(controls.size());
  for (std::size_t k = 0; k < controls.size(); ++k) y[k] = data.y()[static_cast<std::size_t>(controls[k])];
  return fit_prognostic(x, y, folds, seed);
}

PrognosticModel fit_prognostic(const TrialDataset& data, int folds, std::uint64_t seed) {
  std::vector<std::size_t> rows(data.n());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return fit_prognostic(data, rows, folds, seed);
}

std::vector<double> predict_prognostic(const PrognosticModel& model, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != model.dim) {
    throw ValidationError("prognostic: query has " + std::to_string(x.cols()) +
                          " covariates, model was fit on " + std::to_string(model.dim));
  }
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<double> out(n, 0.0), pred(n);
  for (std::size_t j = 0; j < model.learners.size(); ++j) {
    if (model.weights[j] == 0.0) continue;
    model.learners[j]->predict(x, pred);
    for (std::size_t i = 0; i < n; ++i) out[i] += model.weights[j] * pred[i];
  }
  return out;
}

}  // namespace tehtree
