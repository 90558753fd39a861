#include "tehtree/tree.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "tehtree/error.hpp"
#include "tehtree/lmm.hpp"

namespace tehtree {

const char* to_string(EffectMode mode) noexcept {
  return mode == EffectMode::single ? "single" : "double";
}

EffectMode parse_effect_mode(const std::string& text) {
  if (text == "single") return EffectMode::single;
  if (text == "double") return EffectMode::double_sample;
  throw ValidationError("mode must be 'single' or 'double', got '" + text + "'");
}

std::size_t TehTree::n_leaves() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

int TehTree::leaf_for(std::span<const double> x_row) const {
  if (x_row.size() != p) {
    throw ValidationError("tree: row has " + std::to_string(x_row.size()) + " covariates, tree expects " +
                          std::to_string(p));
  }
  int k = 0;
  while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
    const TreeNode& node = nodes[static_cast<std::size_t>(k)];
    k = x_row[static_cast<std::size_t>(node.var)] <= node.threshold ? node.left : node.right;
  }
  return k;
}

std::vector<int> TehTree::split_vars() const {
  std::vector<int> out;
  for (const TreeNode& n : nodes) {
    if (!n.is_leaf()) out.push_back(n.var);
  }
  return out;
}

namespace {

std::vector<double> column_values(const MatchedPairSet& pairs, std::span<const std::size_t> rows,
                                  int var) {
  std::vector<double> v(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    v[k] = pairs.x_treated(static_cast<Eigen::Index>(rows[k]), var);
  }
  return v;
}

std::vector<double> row_of(const Eigen::MatrixXd& x, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index c = 0; c < x.cols(); ++c) v[static_cast<std::size_t>(c)] = x(r, c);
  return v;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool stat_tied(double a, double b) {
  if (std::isinf(a) || std::isinf(b)) return a == b;
  return std::fabs(a - b) <= kSplitTieTolerance * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace

std::optional<SplitVariable> select_split_variable(const MatchedPairSet& pairs,
                                                   std::span<const std::size_t> node_rows,
                                                   double alpha) {
  if (node_rows.size() < 4) throw ValidationError("tree: a node needs at least 4 pairs to test");
  const int p = static_cast<int>(pairs.x_treated.cols());
  std::vector<double> delta(node_rows.size());
  std::vector<int> group(node_rows.size());
  for (std::size_t k = 0; k < node_rows.size(); ++k) {
    delta[k] = pairs.delta[node_rows[k]];
    group[k] = pairs.group[node_rows[k]];
  }
  SplitVariable best{-1, std::vector<double>(static_cast<std::size_t>(p), 1.0)};
  double min_p = std::numeric_limits<double>::infinity();
  for (int m = 0; m < p; ++m) {
    const std::vector<double> x = column_values(pairs, node_rows, m);
    double pv = 1.0;
    try {
      pv = fit_random_intercept(x, delta, group).p_value;
    } catch (const DegenerateRegressor&) {
      pv = 1.0;
    }
    best.p_values[static_cast<std::size_t>(m)] = pv;
    if (pv < min_p) {
      min_p = pv;
      best.var = m;
    }
  }
  if (best.var < 0 || !(min_p < alpha / static_cast<double>(p))) return std::nullopt;
  return best;
}

std::optional<double> find_split_point(const MatchedPairSet& pairs,
                                       std::span<const std::size_t> node_rows, int var,
                                       int min_node) {
  const std::size_t n = node_rows.size();
  if (n < 4) return std::nullopt;
  const std::vector<double> values = column_values(pairs, node_rows, var);

  // Node-level centering of delta; the regressor is the raw 0/1 indicator.
  double dbar = 0.0;
  for (std::size_t k = 0; k < n; ++k) dbar += pairs.delta[node_rows[k]];
  dbar /= static_cast<double>(n);
  std::vector<double> dc(n);
  std::vector<int> raw_group(n);
  for (std::size_t k = 0; k < n; ++k) {
    dc[k] = pairs.delta[node_rows[k]] - dbar;
    raw_group[k] = pairs.group[node_rows[k]];
  }
  std::size_t n_groups = 0;
  const std::vector<int> group = lmm::densify_groups(raw_group, &n_groups);

  // Start with every row below the threshold (indicator 0), then move rows
  // across in descending order of the covariate.
  const std::vector<double> zeros(n, 0.0);
  lmm::Moments m = lmm::compute_moments(zeros, dc, group, n_groups);
  std::vector<double> gsize(n_groups, 0.0), gy(n_groups, 0.0), gx(n_groups, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    gsize[static_cast<std::size_t>(group[k])] += 1.0;
    gy[static_cast<std::size_t>(group[k])] += dc[k];
  }
  std::vector<std::size_t> class_of(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    for (std::size_t c = 0; c < m.classes.size(); ++c) {
      if (m.classes[c].size == gsize[g]) class_of[g] = c;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  const double median = median_of(values);
  std::optional<double> best_c;
  double best_t = -1.0;
  const auto min_side = static_cast<std::size_t>(std::max(min_node, 1));

  std::size_t upper = 0;
  std::size_t k = 0;
  while (k < n) {
    const double v = values[order[k]];
    while (k < n && values[order[k]] == v) {
      const std::size_t row = order[k];
      const auto g = static_cast<std::size_t>(group[row]);
      lmm::SizeClass& cls = m.classes[class_of[g]];
      cls.sx += 1.0;
      cls.sxx += 2.0 * gx[g] + 1.0;
      cls.sxy += gy[g];
      gx[g] += 1.0;
      m.sx += 1.0;
      m.sxx += 1.0;
      m.sxy += dc[row];
      ++upper;
      ++k;
    }
    if (k == n) break;
    const std::size_t lower = n - upper;
    if (upper < min_side || lower < min_side) continue;
    const double c = 0.5 * (v + values[order[k]]);
    const double t = std::fabs(lmm::fit_from_moments(m).t_stat);
    if (std::isnan(t)) continue;
    bool take = false;
    if (!best_c) {
      take = true;
    } else if (stat_tied(t, best_t)) {
      const double dc_new = std::fabs(c - median);
      const double dc_old = std::fabs(*best_c - median);
      take = dc_new < dc_old || (dc_new == dc_old && c < *best_c);
    } else {
      take = t > best_t;
    }
    if (take) {
      best_c = c;
      best_t = t;
    }
  }
  return best_c;
}

TehTree build_tree(const MatchedPairSet& pairs, double alpha, int min_node, int max_depth) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("tree: alpha must lie in (0, 1)");
  if (min_node < 1) throw ValidationError("tree: min_node must be at least 1");
  if (max_depth < 0) throw ValidationError("tree: max_depth must be nonnegative");
  if (pairs.size() < 2 * static_cast<std::size_t>(min_node)) {
    throw ValidationError("tree: " + std::to_string(pairs.size()) + " pairs; need at least " +
                          std::to_string(2 * min_node));
  }
  if (pairs.x_treated.cols() == 0) throw ValidationError("tree: no covariates");

  TehTree tree;
  tree.alpha = alpha;
  tree.min_node = min_node;
  tree.max_depth = max_depth;
  tree.p = static_cast<std::size_t>(pairs.x_treated.cols());

  std::function<int(std::vector<std::size_t>, int)> grow = [&](std::vector<std::size_t> rows,
                                                                int depth) -> int {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.back().depth = depth;
    tree.nodes.back().n_pairs = rows.size();

    if (depth >= max_depth || rows.size() < 2 * static_cast<std::size_t>(min_node) || rows.size() < 4) {
      return id;
    }
    auto selected = select_split_variable(pairs, rows, alpha);
    if (!selected) return id;
    const auto threshold = find_split_point(pairs, rows, selected->var, min_node);
    if (!threshold) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) {
      (pairs.x_treated(static_cast<Eigen::Index>(r), selected->var) <= *threshold ? left : right).push_back(r);
    }
    {
      TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
      node.var = selected->var;
      node.threshold = *threshold;
      node.selected_p = selected->p_values[static_cast<std::size_t>(selected->var)];
      node.p_values = std::move(selected->p_values);
    }
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    tree.nodes[static_cast<std::size_t>(id)].left = l;
    tree.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  };

  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  grow(std::move(all), 0);
  return tree;
}

TehTree estimate_effects(const TehTree& tree, EffectMode mode, const MatchedPairSet& pairs,
                         const TrialDataset* holdout) {
  TehTree out = tree;
  out.mode = mode;
  out.annotated = true;
  const std::size_t nn = out.nodes.size();
  for (TreeNode& node : out.nodes) {
    node.effect.reset();
    node.n_treated_holdout = 0;
    node.n_control_holdout = 0;
    node.missing_arm = false;
  }

  if (mode == EffectMode::single) {
    std::vector<double> sum(nn, 0.0);
    std::vector<std::size_t> count(nn, 0);
    for (std::size_t l = 0; l < pairs.size(); ++l) {
      const auto leaf = static_cast<std::size_t>(
          out.leaf_for(row_of(pairs.x_treated, static_cast<Eigen::Index>(l))));
      sum[leaf] += pairs.delta[l];
      ++count[leaf];
    }
    for (std::size_t k = 0; k < nn; ++k) {
      if (out.nodes[k].is_leaf() && count[k] > 0) {
        out.nodes[k].effect = sum[k] / static_cast<double>(count[k]);
      }
    }
    return out;
  }

  if (holdout == nullptr || holdout->n() == 0) {
    throw ValidationError("tree: double-sample estimation needs a nonempty holdout");
  }
  if (holdout->p() != out.p) throw ValidationError("tree: holdout covariate count differs from tree");
  std::vector<double> sum1(nn, 0.0), sum0(nn, 0.0);
  for (std::size_t i = 0; i < holdout->n(); ++i) {
    const auto leaf =
        static_cast<std::size_t>(out.leaf_for(row_of(holdout->x(), static_cast<Eigen::Index>(i))));
    if (holdout->z()[i] == 1) {
      sum1[leaf] += holdout->y()[i];
      ++out.nodes[leaf].n_treated_holdout;
    } else {
      sum0[leaf] += holdout->y()[i];
      ++out.nodes[leaf].n_control_holdout;
    }
  }
  for (std::size_t k = 0; k < nn; ++k) {
    TreeNode& node = out.nodes[k];
    if (!node.is_leaf()) continue;
    if (node.n_treated_holdout == 0 || node.n_control_holdout == 0) {
      node.missing_arm = true;
      continue;
    }
    node.effect = sum1[k] / static_cast<double>(node.n_treated_holdout) -
                  sum0[k] / static_cast<double>(node.n_control_holdout);
  }
  return out;
}

std::optional<double> predict_effect(const TehTree& tree, std::span<const double> x_row) {
  if (!tree.annotated) throw ValidationError("tree: effects have not been estimated");
  return tree.nodes[static_cast<std::size_t>(tree.leaf_for(x_row))].effect;
}

std::string summarize(const TehTree& tree) {
  std::ostringstream out;
  char buf[256];
  const auto name = [&](int var) {
    return static_cast<std::size_t>(var) < tree.col_names.size() ? tree.col_names[static_cast<std::size_t>(var)]
                                                                  : "x" + std::to_string(var + 1);
  };
  std::snprintf(buf, sizeof(buf), "tree: %zu node(s), %zu leaf/leaves, alpha=%g, min_node=%d, mode=%s\n",
                tree.nodes.size(), tree.n_leaves(), tree.alpha, tree.min_node,
                tree.annotated ? to_string(tree.mode) : "none");
  out << buf;
  std::function<void(int, const std::string&)> walk = [&](int id, const std::string& rule) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(id)];
    const std::string indent(static_cast<std::size_t>(2 * node.depth), ' ');
    if (node.is_leaf()) {
      std::string effect = node.effect ? std::to_string(*node.effect) : std::string("NA");
      std::snprintf(buf, sizeof(buf), "%s[%d] %s leaf: effect=%s pairs=%zu", indent.c_str(), id,
                    rule.c_str(), effect.c_str(), node.n_pairs);
      out << buf;
      if (tree.annotated && tree.mode == EffectMode::double_sample) {
        std::snprintf(buf, sizeof(buf), " holdout_treated=%zu holdout_control=%zu%s",
                      node.n_treated_holdout, node.n_control_holdout,
                      node.missing_arm ? " (arm missing)" : "");
        out << buf;
      }
      out << '\n';
      return;
    }
    std::snprintf(buf, sizeof(buf), "%s[%d] %s split on %s at %.6g (p=%.3g, pairs=%zu)\n",
                  indent.c_str(), id, rule.c_str(), name(node.var).c_str(), node.threshold,
                  node.selected_p, node.n_pairs);
    out << buf;
    std::snprintf(buf, sizeof(buf), "%.6g", node.threshold);
    walk(node.left, name(node.var) + " <= " + buf);
    walk(node.right, name(node.var) + " > " + buf);
  };
  walk(0, "root");
  return out.str();
}

}  // namespace tehtree
