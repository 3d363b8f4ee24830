#pragma once

#include <stdexcept>
#include <string>

namespace atso {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: out-of-range parameters, violated preconditions, malformed
/// configuration. The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, std::string message)
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)),
        message_(std::move(message)) {}

  /// Dotted path of the offending field, e.g. `sweep.num_seeds`. May be empty.
  const std::string& field() const noexcept { return field_; }
  /// what() without the field prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string field_;
  std::string message_;
};

/// File format and IO failures. `field()` names the part of the file that
/// could not be read or failed validation.
class IoError : public Error {
 public:
  IoError(std::string field, std::string message)
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)),
        message_(std::move(message)) {}

  const std::string& field() const noexcept { return field_; }
  /// what() without the field prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string field_;
  std::string message_;
};

/// Numerical failure during training (non-finite loss and the like).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace atso
