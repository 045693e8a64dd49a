#pragma once

#include <stdexcept>
#include <string>

namespace swarmvote {

// Error category; the CLI maps these onto exit codes 1, 2 and 3.
enum class ErrorKind { Usage, Data, Numeric };

// Base exception. what() is prefixed with the module that raised it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message),
        kind_(kind),
        module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

// Invalid parameter or precondition (K < 2, fraction out of range, ...).
class UsageError : public Error {
 public:
  UsageError(std::string module, const std::string& message)
      : Error(ErrorKind::Usage, std::move(module), message) {}
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  DataError(std::string module, const std::string& message)
      : Error(ErrorKind::Data, std::move(module), message) {}
};

// Non-finite values or undefined arithmetic.
class NumericError : public Error {
 public:
  NumericError(std::string module, const std::string& message)
      : Error(ErrorKind::Numeric, std::move(module), message) {}
};

inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
      return 1;
    case ErrorKind::Data:
      return 2;
    case ErrorKind::Numeric:
      return 3;
  }
  return 1;
}

}  // namespace swarmvote
