// Command-line front end: fit, predict, simulate, report.
//
// Exit codes: 0 success, 1 internal error, 2 invalid input or flags.
// stdout carries key=value lines only.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tehtree/bench.hpp"
#include "tehtree/dataset.hpp"
#include "tehtree/error.hpp"
#include "tehtree/kernels.hpp"
#include "tehtree/pipeline.hpp"
#include "tehtree/simgen.hpp"
#include "tehtree/tree.hpp"
#include "tehtree/tree_json.hpp"

namespace {

using namespace tehtree;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << text;
}

struct FitFlags {
  std::string data, outcome, treatment, out, mode = "single";
  double alpha = 0.05;
  double train_frac = 0.75;
  int min_node = 10, max_depth = 10, folds = 10;
  std::uint64_t seed = 1;
};

int run_fit(const FitFlags& f) {
  const TrialDataset data = load_csv(f.data, f.outcome, f.treatment);
  FitConfig cfg;
  cfg.alpha = f.alpha;
  cfg.mode = parse_effect_mode(f.mode);
  cfg.train_frac = f.train_frac;
  cfg.min_node = f.min_node;
  cfg.max_depth = f.max_depth;
  cfg.folds = f.folds;
  cfg.seed = f.seed;
  std::cout << "seed=" << f.seed << '\n';

  const FitResult fit = fit_tehtree(data, cfg);
  write_text(f.out, dump_tree(fit.tree));
  write_text(f.out + ".summary.txt", summarize(fit.tree));

  const FitDiagnostics& d = fit.diagnostics;
  std::cout << "n=" << data.n() << '\n'
            << "p=" << data.p() << '\n'
            << "n_train=" << d.n_train << '\n'
            << "n_holdout=" << d.n_holdout << '\n'
            << "n_pairs=" << d.n_pairs << '\n'
            << "reused_controls=" << d.reused_controls << '\n'
            << "n_leaves=" << fit.tree.n_leaves() << '\n'
            << "overall_effect=" << format_double(fit.overall_effect) << '\n';
  for (std::size_t k = 0; k < d.learners.size(); ++k) {
    std::cout << "learner." << d.learners[k] << ".cv_risk=" << format_double(d.cv_risk[k]) << '\n'
              << "learner." << d.learners[k] << ".weight=" << format_double(d.weights[k]) << '\n';
  }
  std::cout << "tree=" << f.out << '\n' << "summary=" << f.out << ".summary.txt" << '\n';
  return 0;
}

int run_predict(const std::string& tree_path, const std::string& data_path, const std::string& out_path) {
  std::ifstream in(tree_path);
  if (!in) throw ValidationError("cannot open tree '" + tree_path + "'");
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tree json: ") + e.what());
  }
  const TehTree tree = tree_from_json(j);
  const CsvTable table = read_csv_table(data_path);
  std::vector<std::size_t> cols;
  for (const auto& name : tree.col_names) cols.push_back(table.column_index(name));

  std::ostringstream out;
  out << "row,leaf,effect\n";
  std::vector<double> row(cols.size());
  std::size_t missing = 0;
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t k = 0; k < cols.size(); ++k) row[k] = table.columns[cols[k]][i];
    const int leaf = tree.leaf_for(row);
    const auto effect = predict_effect(tree, row);
    if (!effect) ++missing;
    out << i + 1 << ',' << leaf << ',' << (effect ? format_double(*effect) : std::string("NA")) << '\n';
  }
  write_text(out_path, out.str());
  std::cout << "rows=" << table.rows() << '\n' << "missing_effects=" << missing << '\n' << "out=" << out_path << '\n';
  return 0;
}

struct SimFlags {
  std::string model = "M1", covariates = "C2", coeffs, config, out, per_rep, mode = "single";
  std::size_t n = 200;
  double rho = 0.0, alpha = 0.05, train_frac = 0.75;
  int reps = 500, min_node = 10, max_depth = 10, folds = 10;
  int workers = 0;
  std::uint64_t seed = 1;
};

int run_simulate(const SimFlags& f, const CLI::App& sub) {
  ScenarioSpec spec;
  if (!f.config.empty()) spec = load_scenario_config(f.config);
  if (f.config.empty() || sub.count("--model")) spec.model = parse_model(f.model);
  if (f.config.empty() || sub.count("--covariates")) spec.covariates = parse_covariates(f.covariates);
  if (sub.count("--coeffs")) {
    spec.coeffs = parse_coefficients(f.coeffs);
    spec.coeff_code = f.coeffs;
  }
  if (f.config.empty() || sub.count("--n")) spec.n = f.n;
  if (f.config.empty() || sub.count("--rho")) spec.rho = f.rho;
  if (f.config.empty() || sub.count("--seed")) spec.seed = f.seed;
  spec.validate();

  FitConfig cfg;
  cfg.alpha = f.alpha;
  cfg.min_node = f.min_node;
  cfg.max_depth = f.max_depth;
  cfg.mode = parse_effect_mode(f.mode);
  cfg.train_frac = f.train_frac;
  cfg.folds = f.folds;
  cfg.validate();

  const int workers = f.workers > 0 ? f.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::cout << "seed=" << spec.seed << '\n'
            << "scenario=" << to_string(spec.model) << ' ' << to_string(spec.covariates) << ' '
            << (spec.coeff_code.empty() ? "none" : spec.coeff_code) << '\n'
            << "n=" << spec.n << '\n'
            << "rho=" << format_double(spec.rho) << '\n'
            << "reps=" << f.reps << '\n';

  const ReplicationReport report = run_replications(spec, cfg, f.reps, workers);
  const std::vector<int> targets = heterogeneity_vars(spec);
  const Metrics m = aggregate_metrics(report, targets);

  std::ostringstream csv;
  write_metrics_csv(csv, report, m);
  write_text(f.out, csv.str());
  if (!f.per_rep.empty()) {
    std::ostringstream rep;
    write_per_rep_csv(rep, report);
    write_text(f.per_rep, rep.str());
  }

  std::cout << "failed=" << m.failed << '\n';
  if (targets.empty()) {
    std::cout << "type_I_error=" << format_double(m.type_I_error) << '\n';
  } else {
    std::cout << "power_any_node=" << format_double(m.power_any_node) << '\n'
              << "power_root=" << format_double(m.power_root) << '\n';
  }
  std::cout << "mean_terminal=" << format_double(m.mean_terminal) << '\n'
            << "metrics=" << f.out << '\n';
  if (!report.ok()) {
    std::cerr << "error: " << m.failed << " of " << m.reps << " replications failed\n";
    for (const auto& r : report.per_rep) {
      if (r.failed) {
        std::cerr << "  first failure: " << r.error << '\n';
        break;
      }
    }
    return 1;
  }
  return 0;
}

// Merges metrics CSVs into one table; columns are the union in first-seen order.
int run_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  std::vector<std::string> columns;
  std::vector<std::map<std::string, std::string>> rows;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::string line;
    std::vector<std::string> header;
    const auto split = [](const std::string& l) {
      std::vector<std::string> out;
      std::string cur;
      bool quoted = false;
      for (std::size_t i = 0; i < l.size(); ++i) {
        const char c = l[i];
        if (quoted) {
          if (c == '"' && i + 1 < l.size() && l[i + 1] == '"') {
            cur += '"';
            ++i;
          } else if (c == '"') {
            quoted = false;
          } else {
            cur += c;
          }
        } else if (c == '"') {
          quoted = true;
        } else if (c == ',') {
          out.push_back(cur);
          cur.clear();
        } else if (c != '\r') {
          cur += c;
        }
      }
      out.push_back(cur);
      return out;
    };
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = split(line);
      if (header.empty()) {
        header = fields;
        for (const auto& h : header) {
          if (std::find(columns.begin(), columns.end(), h) == columns.end()) columns.push_back(h);
        }
        continue;
      }
      if (fields.size() != header.size()) throw ValidationError("'" + path + "': ragged row");
      std::map<std::string, std::string> row;
      for (std::size_t k = 0; k < header.size(); ++k) row[header[k]] = fields[k];
      row["source"] = path;
      rows.push_back(std::move(row));
    }
  }
  columns.insert(columns.begin(), "source");
  std::ostringstream out;
  for (std::size_t k = 0; k < columns.size(); ++k) out << (k ? "," : "") << columns[k];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      const auto it = row.find(columns[k]);
      std::string v = it == row.end() ? "NA" : it->second;
      if (v.find(',') != std::string::npos) v = "\"" + v + "\"";
      out << (k ? "," : "") << v;
    }
    out << '\n';
  }
  write_text(out_path, out.str());
  std::cout << "inputs=" << inputs.size() << '\n' << "rows=" << rows.size() << '\n' << "out=" << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Treatment effect heterogeneity trees"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tehtree 1.0");

  FitFlags fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a tree to a trial CSV");
  fit_cmd->add_option("--data", fit.data, "CSV file with header row")->required();
  fit_cmd->add_option("--outcome", fit.outcome, "Outcome column")->required();
  fit_cmd->add_option("--treatment", fit.treatment, "Treatment column (0/1)")->required();
  fit_cmd->add_option("--alpha", fit.alpha, "Family-wise significance level")->capture_default_str();
  fit_cmd->add_option("--mode", fit.mode, "single or double")->capture_default_str();
  fit_cmd->add_option("--train-frac", fit.train_frac, "Training fraction in double mode")->capture_default_str();
  fit_cmd->add_option("--min-node", fit.min_node, "Minimum pairs per leaf")->capture_default_str();
  fit_cmd->add_option("--max-depth", fit.max_depth, "Maximum tree depth")->capture_default_str();
  fit_cmd->add_option("--folds", fit.folds, "Cross-validation folds")->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "Random seed")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Tree JSON output path")->required();

  std::string tree_path, pred_data, pred_out;
  auto* pred_cmd = app.add_subcommand("predict", "Route rows through a fitted tree");
  pred_cmd->add_option("--tree", tree_path, "Tree JSON from fit")->required();
  pred_cmd->add_option("--data", pred_data, "CSV containing the tree's covariate columns")->required();
  pred_cmd->add_option("--out", pred_out, "Output CSV")->required();

  SimFlags sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Replicate a simulation scenario");
  sim_cmd->add_option("--model", sim.model, "M1..M11")->capture_default_str();
  sim_cmd->add_option("--covariates", sim.covariates, "C1, C2, C3 or CM")->capture_default_str();
  sim_cmd->add_option("--coeffs", sim.coeffs, "Preset (P1..P11[i..iv]) and/or key=value list");
  sim_cmd->add_option("--config", sim.config, "Scenario config file");
  sim_cmd->add_option("--n", sim.n, "Sample size (even)")->capture_default_str();
  sim_cmd->add_option("--rho", sim.rho, "Pairwise covariate correlation")->capture_default_str();
  sim_cmd->add_option("--reps", sim.reps, "Replications")->capture_default_str();
  sim_cmd->add_option("--alpha", sim.alpha, "Family-wise significance level")->capture_default_str();
  sim_cmd->add_option("--mode", sim.mode, "single or double")->capture_default_str();
  sim_cmd->add_option("--train-frac", sim.train_frac, "Training fraction in double mode")->capture_default_str();
  sim_cmd->add_option("--min-node", sim.min_node, "Minimum pairs per leaf")->capture_default_str();
  sim_cmd->add_option("--max-depth", sim.max_depth, "Maximum tree depth")->capture_default_str();
  sim_cmd->add_option("--folds", sim.folds, "Cross-validation folds")->capture_default_str();
  sim_cmd->add_option("--workers", sim.workers, "Worker threads (default: hardware)");
  sim_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--out", sim.out, "Metrics CSV output")->required();
  sim_cmd->add_option("--per-rep", sim.per_rep, "Optional per-replication CSV");

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* rep_cmd = app.add_subcommand("report", "Merge metrics CSVs");
  rep_cmd->add_option("--inputs", report_inputs, "Metrics CSV files")->required()->expected(1, -1);
  rep_cmd->add_option("--out", report_out, "Merged CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit_cmd) return run_fit(fit);
    if (*pred_cmd) return run_predict(tree_path, pred_data, pred_out);
    if (*sim_cmd) return run_simulate(sim, *sim_cmd);
    if (*rep_cmd) return run_report(report_inputs, report_out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
