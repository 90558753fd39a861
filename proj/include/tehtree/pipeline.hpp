#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tehtree/dataset.hpp"
#include "tehtree/matching.hpp"
#include "tehtree/prognostic.hpp"
#include "tehtree/tree.hpp"

namespace tehtree {

struct FitConfig {
  double alpha = 0.05;
  int min_node = 10;
  int max_depth = 10;
  EffectMode mode = EffectMode::single;
  double train_frac = 0.75;  // ignored in single mode
  int folds = 10;
  std::uint64_t seed = 0;
  std::optional<double> caliper;

  void validate() const;
  // 1 in single mode, train_frac otherwise.
  double effective_train_frac() const noexcept;
};

struct FitDiagnostics {
  std::vector<std::string> learners;
  std::vector<double> cv_risk;
  std::vector<double> weights;
  double ensemble_cv_risk = 0.0;
  // min, 25%, median, 75%, max of the matched score distances.
  std::array<double, 5> distance_quantiles{};
  std::size_t n_pairs = 0;
  std::size_t distinct_controls = 0;
  std::size_t reused_controls = 0;  // n_pairs - distinct_controls
  std::size_t dropped_pairs = 0;
  std::size_t n_train = 0;
  std::size_t n_holdout = 0;
};

struct FitResult {
  TehTree tree;  // annotated
  FitDiagnostics diagnostics;
  MatchedPairSet pairs;
  SplitIndices split;
  // Whole-sample effect under the same estimator as the leaves.
  double overall_effect = 0.0;
};

// Split, fit prognostic scores on training controls, match training treated to
// training controls, grow the tree on the pairs, then estimate leaf effects.
// Errors are rethrown with the failing stage named.
FitResult fit_tehtree(const TrialDataset& data, const FitConfig& config);

}  // namespace tehtree
