#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mshmm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, dimension mismatches and out-of-range labels.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A penalty matrix without a single eigenvalue above the rank tolerance.
class DegeneratePenalty : public Error {
 public:
  using Error::Error;
};

/// Cholesky factorization failed; the caller may regularize and retry.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

/// Every state density underflowed at one time point.
class NumericalUnderflow : public Error {
 public:
  NumericalUnderflow(std::size_t t, const std::string& what)
      : Error(what), time_index_(t) {}
  std::size_t time_index() const { return time_index_; }

 private:
  std::size_t time_index_;
};

/// Inner or outer optimization failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Model configuration errors carry a 1-based line/column position.
class ConfigError : public Error {
 public:
  ConfigError(int line, int column, const std::string& message)
      : Error("line " + std::to_string(line) + ", column " +
              std::to_string(column) + ": " + message),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace mshmm
