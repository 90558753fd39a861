#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tehtree/dataset.hpp"

namespace tehtree {

enum class LearnerKind { mean, linear, linear_interactions, bagged_stumps, knn };

const char* to_string(LearnerKind kind) noexcept;

class Learner {
 public:
  virtual ~Learner() = default;
  virtual LearnerKind kind() const noexcept = 0;
  virtual std::size_t dim() const noexcept = 0;
  // x has dim() columns; out has x.rows() entries.
  virtual void predict(const Eigen::MatrixXd& x, std::span<double> out) const = 0;
};

// Fits one base learner on (x, y). The seed drives bootstrap and feature draws.
std::shared_ptr<const Learner> fit_learner(LearnerKind kind, const Eigen::MatrixXd& x,
                                           std::span<const double> y, std::uint64_t seed);

inline constexpr int kStumpCount = 200;

// Number of terms in the pairwise-interaction design, intercept included.
std::size_t interaction_term_count(std::size_t p) noexcept;

// Stacked ensemble estimate of E(Y | Z = 0, X).
struct PrognosticModel {
  std::vector<std::shared_ptr<const Learner>> learners;
  std::vector<double> weights;  // on the unit simplex
  std::vector<double> cv_risk;  // V-fold mean squared error per learner
  double ensemble_cv_risk = 0.0;
  std::size_t dim = 0;

  std::vector<LearnerKind> roster() const;
};

// Fits the ensemble on the control rows of data (optionally restricted to rows).
PrognosticModel fit_prognostic(const TrialDataset& data, int folds, std::uint64_t seed);
PrognosticModel fit_prognostic(const TrialDataset& data, std::span<const std::size_t> rows,
                               int folds, std::uint64_t seed);

// Same, for an already extracted control-arm design.
PrognosticModel fit_prognostic(const Eigen::MatrixXd& x, std::span<const double> y, int folds,
                               std::uint64_t seed);

std::vector<double> predict_prognostic(const PrognosticModel& model, const Eigen::MatrixXd& x);

// Minimizes ||y - Z w||^2 over the unit simplex. Subsets are searched from the
// smallest up and a larger one replaces the incumbent only on a strict
// improvement beyond a tolerance scaled to the variance of y.
std::vector<double> simplex_least_squares(const Eigen::MatrixXd& z, std::span<const double> y);

}  // namespace tehtree
