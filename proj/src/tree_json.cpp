#include "tehtree/tree_json.hpp"

#include <functional>

#include "tehtree/error.hpp"

namespace tehtree {

namespace {
constexpr const char* kFormat = "tehtree-1";
}

nlohmann::ordered_json tree_to_json(const TehTree& tree) {
  using nlohmann::ordered_json;
  std::function<ordered_json(int)> node_json = [&](int id) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    ordered_json j;
    if (node.is_leaf()) {
      j["effect"] = node.effect ? ordered_json(*node.effect) : ordered_json(nullptr);
      j["n"] = node.n_pairs;
      j["n_treated_holdout"] = node.n_treated_holdout;
      j["n_control_holdout"] = node.n_control_holdout;
      j["missing_arm"] = node.missing_arm;
      return j;
    }
    j["var"] = node.var;
    if (static_cast<std::size_t>(node.var) < tree.col_names.size()) {
      j["name"] = tree.col_names[static_cast<std::size_t>(node.var)];
    }
    j["threshold"] = node.threshold;
    j["p"] = node.selected_p;
    j["p_values"] = node.p_values;
    j["n"] = node.n_pairs;
    j["children"] = ordered_json::array({node_json(node.left), node_json(node.right)});
    return j;
  };

  ordered_json j;
  j["format"] = kFormat;
  j["alpha"] = tree.alpha;
  j["min_node"] = tree.min_node;
  j["max_depth"] = tree.max_depth;
  j["annotated"] = tree.annotated;
  j["mode"] = tree.annotated ? ordered_json(to_string(tree.mode)) : ordered_json(nullptr);
  j["p"] = tree.p;
  j["columns"] = tree.col_names;
  j["root"] = node_json(0);
  return j;
}

TehTree tree_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) {
      throw ValidationError("tree json: unsupported format");
    }
    TehTree tree;
    tree.alpha = j.at("alpha").get<double>();
    tree.min_node = j.at("min_node").get<int>();
    tree.max_depth = j.at("max_depth").get<int>();
    tree.annotated = j.at("annotated").get<bool>();
    if (!j.at("mode").is_null()) tree.mode = parse_effect_mode(j.at("mode").get<std::string>());
    tree.p = j.at("p").get<std::size_t>();
    tree.col_names = j.at("columns").get<std::vector<std::string>>();

    std::function<int(const nlohmann::ordered_json&, int)> read = [&](const nlohmann::ordered_json& nj,
                                                                      int depth) -> int {
      const int id = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      {
        TreeNode& node = tree.nodes.back();
        node.depth = depth;
        node.n_pairs = nj.at("n").get<std::size_t>();
      }
      if (nj.contains("children")) {
        const auto& ch = nj.at("children");
        if (!ch.is_array() || ch.size() != 2) throw ValidationError("tree json: node needs two children");
        TreeNode& node = tree.nodes.back();
        node.var = nj.at("var").get<int>();
        if (node.var < 0 || static_cast<std::size_t>(node.var) >= tree.p) {
          throw ValidationError("tree json: split variable out of range");
        }
        node.threshold = nj.at("threshold").get<double>();
        node.selected_p = nj.at("p").get<double>();
        node.p_values = nj.at("p_values").get<std::vector<double>>();
        const int l = read(ch[0], depth + 1);
        const int r = read(ch[1], depth + 1);
        tree.nodes[static_cast<std::size_t>(id)].left = l;
        tree.nodes[static_cast<std::size_t>(id)].right = r;
      } else {
        TreeNode& node = tree.nodes.back();
        if (!nj.at("effect").is_null()) node.effect = nj.at("effect").get<double>();
        node.n_treated_holdout = nj.value("n_treated_holdout", std::size_t{0});
        node.n_control_holdout = nj.value("n_control_holdout", std::size_t{0});
        node.missing_arm = nj.value("missing_arm", false);
      }
      return id;
    };
    read(j.at("root"), 0);
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tree json: ") + e.what());
  }
}

std::string dump_tree(const TehTree& tree) { return tree_to_json(tree).dump(2) + "\n"; }

}  // namespace tehtree
