#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tehtree/dataset.hpp"
#include "tehtree/matching.hpp"

namespace tehtree {

enum class EffectMode { single, double_sample };

const char* to_string(EffectMode mode) noexcept;
EffectMode parse_effect_mode(const std::string& text);

struct TreeNode {
  // Internal nodes: rows with x[var] <= threshold go left.
  int var = -1;
  double threshold = 0.0;
  std::vector<double> p_values;  // one per covariate, at the time of splitting
  double selected_p = 1.0;
  int left = -1;
  int right = -1;

  int depth = 0;
  std::size_t n_pairs = 0;

  // Leaf annotations, filled by estimate_effects.
  std::optional<double> effect;
  std::size_t n_treated_holdout = 0;
  std::size_t n_control_holdout = 0;
  bool missing_arm = false;  // holdout leaf lacked one arm; effect absent

  bool is_leaf() const noexcept { return left < 0; }
};

// Nodes are stored in depth-first order with the root at index 0.
struct TehTree {
  std::vector<TreeNode> nodes;
  double alpha = 0.05;
  int min_node = 10;
  int max_depth = 10;
  std::size_t p = 0;
  std::vector<std::string> col_names;
  bool annotated = false;
  EffectMode mode = EffectMode::single;

  std::size_t n_leaves() const noexcept;
  // Index of the leaf reached by a covariate row.
  int leaf_for(std::span<const double> x_row) const;
  // Split variables in depth-first order (with repeats).
  std::vector<int> split_vars() const;
};

struct SplitVariable {
  int var;
  std::vector<double> p_values;
};

// Mixed-model slope test of every covariate within the node. Returns the
// smallest-p covariate when it clears alpha / p.
std::optional<SplitVariable> select_split_variable(const MatchedPairSet& pairs,
                                                   std::span<const std::size_t> node_rows,
                                                   double alpha);

// Threshold on var maximizing |t| of the mixed model with regressor 1[x >= c]
// over midpoints leaving at least min_node pairs on each side. Empty when no
// candidate is feasible.
std::optional<double> find_split_point(const MatchedPairSet& pairs,
                                       std::span<const std::size_t> node_rows, int var,
                                       int min_node);

// Relative tolerance under which two |t| statistics count as tied.
inline constexpr double kSplitTieTolerance = 1e-12;

TehTree build_tree(const MatchedPairSet& pairs, double alpha, int min_node, int max_depth);

// Annotates leaves. single: mean delta of the pairs in each leaf. double: arm
// mean difference of the holdout rows routed to each leaf.
TehTree estimate_effects(const TehTree& tree, EffectMode mode, const MatchedPairSet& pairs,
                         const TrialDataset* holdout);

std::optional<double> predict_effect(const TehTree& tree, std::span<const double> x_row);

// Human-readable listing of split rules and leaves.
std::string summarize(const TehTree& tree);

}  // namespace tehtree
