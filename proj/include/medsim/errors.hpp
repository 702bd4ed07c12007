#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace medsim {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation (t <= 0, c <= 0, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Matrix or vector dimensions do not match what the operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A matrix that must be entrywise nonnegative has a negative entry.
class NegativeEntryError : public Error {
 public:
  NegativeEntryError(std::string matrix, std::ptrdiff_t row, std::ptrdiff_t col, double value)
      : Error("matrix " + matrix + " has negative entry " + std::to_string(value) + " at (" +
              std::to_string(row) + ", " + std::to_string(col) + ")"),
        matrix_(std::move(matrix)),
        row_(row),
        col_(col),
        value_(value) {}

  const std::string& matrix() const { return matrix_; }
  std::ptrdiff_t row() const { return row_; }
  std::ptrdiff_t col() const { return col_; }
  double value() const { return value_; }

 private:
  std::string matrix_;
  std::ptrdiff_t row_;
  std::ptrdiff_t col_;
  double value_;
};

/// A row of a matrix that must be row-stochastic does not sum to 1.
class RowSumError : public Error {
 public:
  RowSumError(std::string matrix, std::ptrdiff_t row, double sum)
      : Error("matrix " + matrix + " row " + std::to_string(row) + " sums to " +
              std::to_string(sum) + ", expected 1"),
        matrix_(std::move(matrix)),
        row_(row),
        sum_(sum) {}

  const std::string& matrix() const { return matrix_; }
  std::ptrdiff_t row() const { return row_; }
  double sum() const { return sum_; }

 private:
  std::string matrix_;
  std::ptrdiff_t row_;
  double sum_;
};

/// A truncated series failed to meet its tail bound within the term budget.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature exhausted its subdivision budget.
class QuadratureError : public Error {
 public:
  using Error::Error;
};

/// The unit eigenvalue of a stochastic matrix is not simple.
class NonUniqueEigenvectorError : public Error {
 public:
  using Error::Error;
};

/// A matrix required to be invertible is numerically singular.
class SingularMatrixError : public Error {
 public:
  using Error::Error;
};

/// Two objects that must share one time grid do not.
class GridMismatchError : public Error {
 public:
  using Error::Error;
};

/// A requested checkpoint time is not available on the grid or in the recorded data.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// Configuration file cannot be parsed or resolved; message carries file line or key path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace medsim
