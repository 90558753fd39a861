#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tehtree/dataset.hpp"

namespace tehtree {

enum class Model { M1 = 1, M2, M3, M4, M5, M6, M7, M8, M9, M10, M11 };

// C1: 5 binary. C2: 5 continuous. C3: 10 continuous.
// CM: 5 continuous followed by 5 binary (mixed roster for model M11).
enum class CovariateSet { C1, C2, C3, CM };

std::string to_string(Model model);
std::string to_string(CovariateSet set);
Model parse_model(const std::string& code);
CovariateSet parse_covariates(const std::string& code);

struct Coefficients {
  std::optional<double> gamma;
  std::optional<double> gamma1;
  std::optional<double> gamma2;
  std::optional<double> eta;
  std::optional<std::array<double, 5>> phi;

  // Names of the coefficients that are set, e.g. {"gamma", "eta"}.
  std::vector<std::string> present() const;
};

// Named coefficient presets: "P4", "P5i" or "P5(i)", ... "P11iii".
Coefficients coefficient_preset(const std::string& code);

// Comma-separated presets and key=value overrides (gamma, gamma1, gamma2, eta,
// phi1..phi5), applied left to right: "P8iii", "gamma=2,eta=1.5", "P9i,gamma2=-3".
Coefficients parse_coefficients(const std::string& text);

struct ScenarioSpec {
  Model model = Model::M1;
  CovariateSet covariates = CovariateSet::C2;
  Coefficients coeffs;
  std::string coeff_code;  // as given by the user, for reporting
  std::size_t n = 200;
  double rho = 0.0;
  std::uint64_t seed = 0;

  std::size_t p() const noexcept;
  std::vector<ColumnKind> column_kinds() const;
  // Throws ValidationError for missing or unused coefficients, odd n or invalid rho.
  void validate() const;
};

// "(M3)(C2)(P4)" or "M3 C2 P4"; n, rho and seed keep their defaults.
ScenarioSpec parse_scenario_code(const std::string& code);

// Plain "key = value" lines (model, covariates, coeffs, n, rho, seed, scenario);
// '#' starts a comment.
ScenarioSpec load_scenario_config(const std::filesystem::path& path);

struct GeneratedData {
  TrialDataset data;
  std::vector<double> true_cate;
};

GeneratedData generate_dataset(const ScenarioSpec& spec);

// Analytic mean outcome and effect for one covariate row.
double control_mean(const ScenarioSpec& spec, std::span<const double> x_row);
double cate(const ScenarioSpec& spec, std::span<const double> x_row);
std::vector<double> true_cate(const ScenarioSpec& spec, const Eigen::MatrixXd& x);

// Covariates (0-based) carrying a nonzero treatment interaction.
std::vector<int> heterogeneity_vars(const ScenarioSpec& spec);

inline constexpr double kIntercept = 0.8;
inline constexpr double kMainEffect = 0.8;
inline constexpr std::array<double, 5> kPrognosticBeta{1.0, 0.8, 0.6, 0.4, 0.2};

}  // namespace tehtree
