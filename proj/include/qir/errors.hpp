#pragma once

#include <stdexcept>
#include <string>

namespace qir {

/// Argument outside the admissible domain (probability level, index vector, grid bounds).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A model could not be evaluated at some covariate row.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, long row = -1)
      : std::runtime_error(what), row_(row) {}
  long row() const noexcept { return row_; }

 private:
  long row_;
};

class OptimizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateDensityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The density-weighted Hessian is numerically singular.
class SingularityError : public std::runtime_error {
 public:
  SingularityError(const std::string& what, double eigenvalue)
      : std::runtime_error(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

class TuningError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Row is 1-based counting data rows after the header; 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long row = 0, std::string column = {})
      : std::runtime_error(what), row_(row), column_(std::move(column)) {}
  long row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  long row_;
  std::string column_;
};

}  // namespace qir
