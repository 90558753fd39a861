#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tehtree {

enum class ColumnKind { binary, continuous };

const char* to_string(ColumnKind kind) noexcept;

// Outcomes, binary treatment and covariates of a randomized trial.
// Construction validates every invariant; instances are immutable afterwards.
class TrialDataset {
 public:
  TrialDataset(std::vector<double> y, std::vector<int> z, Eigen::MatrixXd x,
               std::vector<std::string> col_names, std::vector<ColumnKind> col_kind);

  // Same, with column kinds detected from the value sets.
  TrialDataset(std::vector<double> y, std::vector<int> z, Eigen::MatrixXd x,
               std::vector<std::string> col_names);

  std::size_t n() const noexcept { return y_.size(); }
  std::size_t p() const noexcept { return static_cast<std::size_t>(x_.cols()); }
  std::size_t n_treated() const noexcept { return n_treated_; }
  std::size_t n_control() const noexcept { return n() - n_treated_; }

  const std::vector<double>& y() const noexcept { return y_; }
  const std::vector<int>& z() const noexcept { return z_; }
  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const std::vector<std::string>& col_names() const noexcept { return col_names_; }
  const std::vector<ColumnKind>& col_kind() const noexcept { return col_kind_; }

  // Rows in the given order. Throws ValidationError if the subset breaks an invariant.
  TrialDataset subset(std::span<const std::size_t> rows) const;
  // Same covariates and treatment with a new outcome vector.
  TrialDataset with_outcome(std::vector<double> y) const;

 private:
  void validate();

  std::vector<double> y_;
  std::vector<int> z_;
  Eigen::MatrixXd x_;
  std::vector<std::string> col_names_;
  std::vector<ColumnKind> col_kind_;
  std::size_t n_treated_ = 0;
};

// Column kind detection: binary iff every value is 0 or 1.
std::vector<ColumnKind> detect_column_kinds(const Eigen::MatrixXd& x);

// Header plus numeric body of a comma-separated file.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
  // Index of a named column; throws ValidationError when absent.
  std::size_t column_index(const std::string& name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);
CsvTable parse_csv_table(const std::string& text);

// Loads a trial dataset: the outcome and treatment columns are picked by name and
// every remaining column becomes a covariate, in file order.
TrialDataset load_csv(const std::filesystem::path& path, const std::string& outcome,
                      const std::string& treatment);
TrialDataset dataset_from_table(const CsvTable& table, const std::string& outcome,
                                const std::string& treatment);

// Writes y, z and covariates with shortest round-trip number formatting.
void save_csv(const TrialDataset& data, const std::filesystem::path& path,
              const std::string& outcome = "y", const std::string& treatment = "z");

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

// Stratified by arm: ceil(train_frac * arm size) of each arm goes to train.
SplitIndices split_train_holdout(const TrialDataset& data, double train_frac, std::uint64_t seed);

}  // namespace tehtree
