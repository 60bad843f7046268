#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bsde {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message);

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A function was evaluated outside its domain, e.g. a singular driver at y <= 0.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside a module (maps to CLI exit code 3).
class NumericalError : public Error {
 public:
  NumericalError(std::string module, std::ptrdiff_t step, const std::string& message);

  const std::string& module() const noexcept { return module_; }
  /// Time step or iteration index where the failure happened, -1 if not applicable.
  std::ptrdiff_t step() const noexcept { return step_; }

 private:
  std::string module_;
  std::ptrdiff_t step_;
};

/// sigma * sigma' is numerically singular.
class DegeneracyError : public NumericalError {
 public:
  explicit DegeneracyError(const std::string& message);
};

/// Broken internal contract such as mismatched grid shapes.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace bsde
