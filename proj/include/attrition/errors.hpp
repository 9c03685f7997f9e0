#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace attrition {

/// Input data violates the panel schema or its invariants.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& message, std::size_t row = 0, std::string column = {})
      : std::runtime_error(format(message, row, column)), row_(row), column_(std::move(column)) {}

  /// 1-based data row (header excluded); 0 when not tied to a row.
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& message, std::size_t row,
                            const std::string& column) {
    std::string out;
    if (row > 0) out += "row " + std::to_string(row) + ": ";
    if (!column.empty()) out += "column '" + column + "': ";
    return out + message;
  }

  std::size_t row_;
  std::string column_;
};

/// An estimator's preconditions are not met by the sample (typically an
/// empty identifying cell) or a numerical fit failed.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user configuration (bad option values, unknown design, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace attrition
