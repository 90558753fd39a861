#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tehtree {

// Input that breaks a documented contract (bad flags, bad values, too-small arms).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed CSV content; row and column are 1-based data coordinates.
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t row, std::size_t col)
      : ValidationError(what), row_(row), col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

// Regressor with zero variance handed to the mixed-model fit.
class DegenerateRegressor : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tehtree
