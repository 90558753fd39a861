#include "tehtree/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tehtree/error.hpp"
#include "tehtree/rng.hpp"

namespace tehtree {

const char* to_string(ColumnKind kind) noexcept {
  return kind == ColumnKind::binary ? "binary" : "continuous";
}

std::vector<ColumnKind> detect_column_kinds(const Eigen::MatrixXd& x) {
  std::vector<ColumnKind> kinds(static_cast<std::size_t>(x.cols()), ColumnKind::binary);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double v = x(r, c);
      if (v != 0.0 && v != 1.0) {
        kinds[static_cast<std::size_t>(c)] = ColumnKind::continuous;
        break;
      }
    }
  }
  return kinds;
}

TrialDataset::TrialDataset(std::vector<double> y, std::vector<int> z, Eigen::MatrixXd x,
                           std::vector<std::string> col_names, std::vector<ColumnKind> col_kind)
    : y_(std::move(y)),
      z_(std::move(z)),
      x_(std::move(x)),
      col_names_(std::move(col_names)),
      col_kind_(std::move(col_kind)) {
  validate();
}

TrialDataset::TrialDataset(std::vector<double> y, std::vector<int> z, Eigen::MatrixXd x,
                           std::vector<std::string> col_names)
    : y_(std::move(y)), z_(std::move(z)), x_(std::move(x)), col_names_(std::move(col_names)) {
  col_kind_ = detect_column_kinds(x_);
  validate();
}

void TrialDataset::validate() {
  const std::size_t n = y_.size();
  if (z_.size() != n || static_cast<std::size_t>(x_.rows()) != n) {
    throw ValidationError("dataset: y, z and x must have the same number of rows");
  }
  if (n < 4) {
    throw ValidationError("dataset: at least 4 rows required, got " + std::to_string(n));
  }
  if (col_names_.size() != p() || col_kind_.size() != p()) {
    throw ValidationError("dataset: column names/kinds do not match covariate count");
  }
  n_treated_ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (z_[i] != 0 && z_[i] != 1) {
      throw ValidationError("dataset: treatment value " + std::to_string(z_[i]) + " at row " +
                            std::to_string(i + 1) + " is not 0 or 1");
    }
    if (!std::isfinite(y_[i])) {
      throw ValidationError("dataset: non-finite outcome at row " + std::to_string(i + 1));
    }
    n_treated_ += static_cast<std::size_t>(z_[i]);
  }
  if (n_treated_ == 0 || n_treated_ == n) {
    throw ValidationError("dataset: both treatment arms must be nonempty");
  }
  for (Eigen::Index c = 0; c < x_.cols(); ++c) {
    const bool binary = col_kind_[static_cast<std::size_t>(c)] == ColumnKind::binary;
    for (Eigen::Index r = 0; r < x_.rows(); ++r) {
      const double v = x_(r, c);
      if (!std::isfinite(v)) {
        throw ValidationError("dataset: non-finite covariate '" + col_names_[c] + "' at row " +
                              std::to_string(r + 1));
      }
      if (binary && v != 0.0 && v != 1.0) {
        throw ValidationError("dataset: binary covariate '" + col_names_[c] +
                              "' has a value outside {0,1} at row " + std::to_string(r + 1));
      }
    }
  }
}

TrialDataset TrialDataset::subset(std::span<const std::size_t> rows) const {
  std::vector<double> y;
  std::vector<int> z;
  y.reserve(rows.size());
  z.reserve(rows.size());
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), x_.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    if (r >= n()) throw ValidationError("dataset: subset row out of range");
    y.push_back(y_[r]);
    z.push_back(z_[r]);
    x.row(static_cast<Eigen::Index>(k)) = x_.row(static_cast<Eigen::Index>(r));
  }
  return TrialDataset(std::move(y), std::move(z), std::move(x), col_names_, col_kind_);
}

TrialDataset TrialDataset::with_outcome(std::vector<double> y) const {
  return TrialDataset(std::move(y), z_, x_, col_names_, col_kind_);
}

std::size_t CsvTable::column_index(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError("csv: column '" + name + "' not found");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  s = s.substr(b, e - b);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(trim(std::string_view(line).substr(start)));
      break;
    }
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

bool blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](char c) { return c == ' ' || c == '\t' || c == '\r'; });
}

}  // namespace

CsvTable parse_csv_table(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  CsvTable table;
  bool have_header = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!have_header) {
      if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
          static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
        line.erase(0, 3);
      }
      if (blank(line)) continue;
      table.header = split_fields(line);
      for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (table.header[c].empty()) {
          throw ParseError("csv: empty column name in header at column " + std::to_string(c + 1), 0,
                           c + 1);
        }
        for (std::size_t d = 0; d < c; ++d) {
          if (table.header[d] == table.header[c]) {
            throw ParseError("csv: duplicate column name '" + table.header[c] + "'", 0, c + 1);
          }
        }
      }
      table.columns.resize(table.header.size());
      have_header = true;
      continue;
    }
    if (blank(line)) continue;
    ++row;
    const auto fields = split_fields(line);
    if (fields.size() != table.header.size()) {
      throw ParseError("csv: row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                           " fields, expected " + std::to_string(table.header.size()),
                       row, 0);
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      const std::string where = "row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                                " ('" + table.header[c] + "')";
      if (f.empty()) throw ParseError("csv: missing value at " + where, row, c + 1);
      double v = 0.0;
      const char* first = f.data();
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw ParseError("csv: non-numeric value '" + f + "' at " + where, row, c + 1);
      }
      if (!std::isfinite(v)) throw ParseError("csv: non-finite value at " + where, row, c + 1);
      table.columns[c].push_back(v);
    }
  }
  if (!have_header) throw ParseError("csv: missing header row", 0, 0);
  return table;
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("csv: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv_table(buf.str());
}

TrialDataset dataset_from_table(const CsvTable& table, const std::string& outcome,
                                const std::string& treatment) {
  const std::size_t yc = table.column_index(outcome);
  const std::size_t zc = table.column_index(treatment);
  if (yc == zc) throw ValidationError("csv: outcome and treatment must be different columns");
  const std::size_t n = table.rows();

  std::vector<int> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = table.columns[zc][i];
    if (v != 0.0 && v != 1.0) {
      throw ValidationError("csv: treatment column '" + treatment + "' has value " +
                            format_double(v) + " at row " + std::to_string(i + 1) +
                            "; expected 0 or 1");
    }
    z[i] = static_cast<int>(v);
  }

  std::vector<std::string> names;
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == yc || c == zc) continue;
    names.push_back(table.header[c]);
    cols.push_back(c);
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = table.columns[cols[k]][i];
    }
  }
  return TrialDataset(table.columns[yc], std::move(z), std::move(x), std::move(names));
}

TrialDataset load_csv(const std::filesystem::path& path, const std::string& outcome,
                      const std::string& treatment) {
  return dataset_from_table(read_csv_table(path), outcome, treatment);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

void save_csv(const TrialDataset& data, const std::filesystem::path& path,
              const std::string& outcome, const std::string& treatment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("csv: cannot write '" + path.string() + "'");
  out << outcome << ',' << treatment;
  for (const auto& name : data.col_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    out << format_double(data.y()[i]) << ',' << data.z()[i];
    for (std::size_t c = 0; c < data.p(); ++c) {
      out << ',' << format_double(data.x()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)));
    }
    out << '\n';
  }
}

SplitIndices split_train_holdout(const TrialDataset& data, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac <= 1.0)) {
    throw ValidationError("split: train_frac must lie in (0, 1]");
  }
  SplitIndices split;
  if (train_frac == 1.0) {
    split.train.resize(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) split.train[i] = i;
    return split;
  }

  std::vector<std::size_t> arms[2];
  for (std::size_t i = 0; i < data.n(); ++i) arms[data.z()[i]].push_back(i);

  for (int arm = 0; arm < 2; ++arm) {
    auto& rows = arms[arm];
    const double scaled = train_frac * static_cast<double>(rows.size());
    if (scaled < 2.0) {
      throw ValidationError("split: arm " + std::to_string(arm) + " has " +
                            std::to_string(rows.size()) + " subjects, too few for train_frac");
    }
    // Tolerance keeps products like 0.7 * 10 from rounding up past the integer.
    const auto take = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
    if (take >= rows.size()) {
      throw ValidationError("split: holdout would have no subjects in arm " + std::to_string(arm));
    }
    Rng rng(derive_seed(seed, {0x5311u, static_cast<std::uint64_t>(arm)}));
    rng.shuffle(rows);
    split.train.insert(split.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
    split.holdout.insert(split.holdout.end(), rows.begin() + static_cast<std::ptrdiff_t>(take), rows.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  return split;
}

}  // namespace tehtree
