#include "tehtree/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "tehtree/error.hpp"
#include "tehtree/rng.hpp"

namespace tehtree {

std::size_t ReplicationReport::failed() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(per_rep.begin(), per_rep.end(), [](const RepRecord& r) { return r.failed; }));
}

bool ReplicationReport::ok() const noexcept {
  return static_cast<double>(failed()) <= 0.01 * static_cast<double>(per_rep.size());
}

RepRecord run_replication(const ScenarioSpec& spec, const FitConfig& method, int rep) {
  RepRecord rec;
  try {
    ScenarioSpec data_spec = spec;
    data_spec.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(rep), 0xda7au});
    const GeneratedData gen = generate_dataset(data_spec);

    FitConfig cfg = method;
    cfg.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(rep), 0xf17u});
    const FitResult fit = fit_tehtree(gen.data, cfg);
    const TehTree& tree = fit.tree;

    rec.n_terminal = tree.n_leaves();
    rec.split_any = rec.n_terminal > 1;
    if (rec.split_any) {
      rec.root_var = tree.nodes[0].var;
      rec.first_split_point = tree.nodes[0].threshold;
    }
    rec.split_vars = tree.split_vars();
    std::sort(rec.split_vars.begin(), rec.split_vars.end());
    rec.split_vars.erase(std::unique(rec.split_vars.begin(), rec.split_vars.end()), rec.split_vars.end());
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf()) rec.leaf_effects.push_back(node.effect);
    }

    ScenarioSpec eval_spec = spec;
    eval_spec.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(rep), 0xe7a1u});
    const GeneratedData eval = generate_dataset(eval_spec);
    const auto& x = eval.data.x();
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    double sse = 0.0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = x(r, c);
      const double est = predict_effect(tree, row).value_or(fit.overall_effect);
      const double e = est - eval.true_cate[static_cast<std::size_t>(r)];
      sse += e * e;
    }
    rec.mse = sse / static_cast<double>(x.rows());
  } catch (const std::exception& e) {
    rec = RepRecord{};
    rec.failed = true;
    rec.error = e.what();
  }
  return rec;
}

ReplicationReport run_replications(const ScenarioSpec& spec, const FitConfig& method, int reps,
                                   int workers) {
  if (reps < 1) throw ValidationError("reps must be at least 1");
  spec.validate();
  method.validate();
  ReplicationReport report;
  report.spec = spec;
  report.method = method;
  report.reps = reps;
  report.per_rep.resize(static_cast<std::size_t>(reps));

  const int pool = std::clamp(workers, 1, reps);
  std::atomic<int> next{0};
  const auto work = [&] {
    for (int r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) {
      report.per_rep[static_cast<std::size_t>(r)] = run_replication(spec, method, r);
    }
  };
  if (pool == 1) {
    work();
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(static_cast<std::size_t>(pool));
    for (int w = 0; w < pool; ++w) threads.emplace_back(work);
  }
  return report;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

Metrics aggregate_metrics(const ReplicationReport& report, const std::vector<int>& targets) {
  Metrics m;
  m.reps = report.per_rep.size();
  m.failed = report.failed();
  std::size_t used = 0, split_reps = 0, non_target = 0;
  std::size_t root_hits = 0, any_hits = 0, all_hits = 0, any_split = 0;
  double terminal_sum = 0.0, mse_sum = 0.0;
  std::vector<double> terminals, firsts;
  for (const RepRecord& r : report.per_rep) {
    if (r.failed) continue;
    ++used;
    terminal_sum += static_cast<double>(r.n_terminal);
    terminals.push_back(static_cast<double>(r.n_terminal));
    mse_sum += r.mse;
    if (r.split_any) {
      ++any_split;
      ++split_reps;
      if (std::any_of(r.split_vars.begin(), r.split_vars.end(),
                      [&](int v) { return !contains(targets, v); })) {
        ++non_target;
      }
    }
    if (!targets.empty()) {
      if (r.root_var && contains(targets, *r.root_var)) ++root_hits;
      if (std::any_of(targets.begin(), targets.end(), [&](int t) { return contains(r.split_vars, t); })) {
        ++any_hits;
      }
      if (std::all_of(targets.begin(), targets.end(), [&](int t) { return contains(r.split_vars, t); })) {
        ++all_hits;
      }
    }
    if (r.first_split_point && (targets.empty() || contains(targets, *r.root_var))) {
      firsts.push_back(*r.first_split_point);
    }
  }
  if (used == 0) return m;
  const double u = static_cast<double>(used);
  m.type_I_error = static_cast<double>(any_split) / u;
  m.power_any_split = static_cast<double>(any_split) / u;
  m.power_root = static_cast<double>(root_hits) / u;
  m.power_any_node = static_cast<double>(any_hits) / u;
  m.power_all = static_cast<double>(all_hits) / u;
  m.mean_terminal = terminal_sum / u;
  m.median_terminal = median_of(terminals);
  m.mean_mse = mse_sum / u;
  m.pct_non_target_splits = split_reps == 0 ? 0.0 : static_cast<double>(non_target) / static_cast<double>(split_reps);
  if (!firsts.empty()) {
    double s = 0.0;
    std::size_t mid = 0;
    for (double f : firsts) {
      s += f;
      if (std::fabs(f) < kMiddleFivePercent) ++mid;
    }
    m.mean_first_split = s / static_cast<double>(firsts.size());
    m.median_first_split = median_of(firsts);
    m.prop_split_mid5 = static_cast<double>(mid) / static_cast<double>(firsts.size());
  }
  return m;
}

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns{
      "model", "covariates", "coeffs", "n", "rho", "seed", "alpha", "min_node", "max_depth", "mode",
      "train_frac", "folds", "reps", "failed", "type_I_error", "power_root", "power_any_node",
      "power_all", "power_any_split", "mean_terminal", "median_terminal", "mean_first_split",
      "median_first_split", "pct_non_target_splits", "prop_split_mid5", "mean_mse"};
  return columns;
}

namespace {

std::string num(double v) { return format_double(v); }
std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); }

std::string quote_if_needed(const std::string& s) {
  if (s.find(',') == std::string::npos && s.find('"') == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<std::string> metrics_row(const ReplicationReport& report, const Metrics& m) {
  const ScenarioSpec& s = report.spec;
  const FitConfig& c = report.method;
  return {to_string(s.model),
          to_string(s.covariates),
          s.coeff_code.empty() ? "none" : s.coeff_code,
          std::to_string(s.n),
          num(s.rho),
          std::to_string(s.seed),
          num(c.alpha),
          std::to_string(c.min_node),
          std::to_string(c.max_depth),
          to_string(c.mode),
          num(c.effective_train_frac()),
          std::to_string(c.folds),
          std::to_string(m.reps),
          std::to_string(m.failed),
          num(m.type_I_error),
          num(m.power_root),
          num(m.power_any_node),
          num(m.power_all),
          num(m.power_any_split),
          num(m.mean_terminal),
          num(m.median_terminal),
          opt(m.mean_first_split),
          opt(m.median_first_split),
          num(m.pct_non_target_splits),
          opt(m.prop_split_mid5),
          num(m.mean_mse)};
}

void write_metrics_csv(std::ostream& out, const ReplicationReport& report, const Metrics& metrics) {
  const auto& cols = metrics_columns();
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  const auto row = metrics_row(report, metrics);
  for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << quote_if_needed(row[k]);
  out << '\n';
}

void write_per_rep_csv(std::ostream& out, const ReplicationReport& report) {
  out << "rep,failed,split_any,root_var,split_vars,first_split_point,n_terminal,mse,error\n";
  for (std::size_t r = 0; r < report.per_rep.size(); ++r) {
    const RepRecord& rec = report.per_rep[r];
    std::string vars;
    for (std::size_t k = 0; k < rec.split_vars.size(); ++k) {
      vars += (k ? ";" : "") + std::to_string(rec.split_vars[k] + 1);
    }
    out << r << ',' << (rec.failed ? 1 : 0) << ',' << (rec.split_any ? 1 : 0) << ','
        << (rec.root_var ? std::to_string(*rec.root_var + 1) : std::string("NA")) << ','
        << (vars.empty() ? std::string("NA") : vars) << ',' << opt(rec.first_split_point) << ','
        << rec.n_terminal << ',' << (rec.failed ? std::string("NA") : num(rec.mse)) << ','
        << quote_if_needed(rec.error) << '\n';
  }
}

}  // namespace tehtree
