#pragma once

#include <string>

#include <json.hpp>

#include "tehtree/tree.hpp"

namespace tehtree {

// Stable JSON form of a tree:
//   {"format": "tehtree-1", "alpha", "min_node", "max_depth", "annotated",
//    "mode", "columns": [...], "root": node}
// internal node: {"var", "name", "threshold", "p", "p_values", "n", "children": [left, right]}
// leaf:          {"effect" (number or null), "n", "n_treated_holdout",
//                 "n_control_holdout", "missing_arm"}
nlohmann::ordered_json tree_to_json(const TehTree& tree);
TehTree tree_from_json(const nlohmann::ordered_json& j);

std::string dump_tree(const TehTree& tree);

}  // namespace tehtree
