#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tehtree/pipeline.hpp"
#include "tehtree/simgen.hpp"

namespace tehtree {

struct RepRecord {
  bool failed = false;
  std::string error;
  bool split_any = false;
  std::optional<int> root_var;
  std::vector<int> split_vars;  // sorted, distinct
  std::optional<double> first_split_point;  // root threshold
  std::size_t n_terminal = 1;
  double mse = 0.0;
  std::vector<std::optional<double>> leaf_effects;
};

struct ReplicationReport {
  std::vector<RepRecord> per_rep;
  ScenarioSpec spec;
  FitConfig method;
  int reps = 0;

  std::size_t failed() const noexcept;
  // More than 1% failed replications fails the run.
  bool ok() const noexcept;
};

// Replication r uses data seed derive_seed(spec.seed, {r, ...}); results do not
// depend on the worker count.
ReplicationReport run_replications(const ScenarioSpec& spec, const FitConfig& method, int reps,
                                   int workers);

// One replication; exposed for tests.
RepRecord run_replication(const ScenarioSpec& spec, const FitConfig& method, int rep);

struct Metrics {
  std::size_t reps = 0;
  std::size_t failed = 0;
  double type_I_error = 0.0;
  double power_root = 0.0;
  double power_any_node = 0.0;
  double power_all = 0.0;
  double power_any_split = 0.0;
  double mean_terminal = 0.0;
  double median_terminal = 0.0;
  std::optional<double> mean_first_split;
  std::optional<double> median_first_split;
  double pct_non_target_splits = 0.0;
  std::optional<double> prop_split_mid5;
  double mean_mse = 0.0;
};

// Half-width of the central 5% of a standard normal, rounded as in the tables.
inline constexpr double kMiddleFivePercent = 0.063;

// Failed replications are left out of every denominator.
Metrics aggregate_metrics(const ReplicationReport& report, const std::vector<int>& heterogeneity_vars);

// Metrics CSV: fixed column set, one row per scenario x method configuration.
const std::vector<std::string>& metrics_columns();
std::vector<std::string> metrics_row(const ReplicationReport& report, const Metrics& metrics);
void write_metrics_csv(std::ostream& out, const ReplicationReport& report, const Metrics& metrics);
void write_per_rep_csv(std::ostream& out, const ReplicationReport& report);

}  // namespace tehtree
