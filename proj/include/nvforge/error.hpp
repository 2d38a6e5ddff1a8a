#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nvforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Ingested data broke an invariant of the target type.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A configuration or input document does not match its schema.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error(path + ": " + message), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised by callers that require a converged fit (the CLI, the campaign).
class FitError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const char* message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace nvforge
