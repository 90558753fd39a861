#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tehtree/dataset.hpp"

namespace tehtree {

struct MatchedPair {
  std::size_t treated;
  std::size_t control;
};

// Treated subjects paired to their nearest-score control, with replacement.
struct MatchedPairSet {
  std::vector<MatchedPair> pairs;
  std::vector<double> delta;       // y[treated] - y[control]
  std::vector<int> group;          // dense id of the control, in order of first use
  Eigen::MatrixXd x_treated;       // covariates of each pair's treated member
  std::vector<double> distance;    // |score[treated] - score[control]|
  std::size_t dropped = 0;         // treated subjects rejected by the caliper

  std::size_t size() const noexcept { return pairs.size(); }
  std::size_t n_groups() const noexcept;
};

// Distances within this absolute tolerance of the minimum count as ties.
inline constexpr double kMatchTieTolerance = 1e-12;

struct MatchOptions {
  // Pairs farther apart than this are dropped and counted in MatchedPairSet::dropped.
  std::optional<double> caliper;
};

// Matches every treated row to a control row. Ties are broken uniformly at
// random with a per-treated-subject stream derived from seed.
MatchedPairSet match_pairs(const TrialDataset& data, std::span<const double> scores,
                           std::uint64_t seed, const MatchOptions& options = {});

// Restricted to the given rows: treated rows among them are matched to control
// rows among them. Indices in the result refer to the full dataset.
MatchedPairSet match_pairs(const TrialDataset& data, std::span<const double> scores,
                           std::span<const std::size_t> rows, std::uint64_t seed,
                           const MatchOptions& options = {});

}  // namespace tehtree
