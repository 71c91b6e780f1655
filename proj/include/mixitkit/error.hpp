#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mixitkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by a caller-supplied value.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (WAV/AVTK headers, truncated payloads).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that this library deliberately does not handle.
class Unsupported : public Error {
 public:
  using Error::Error;
};

/// Bad run configuration. `pointer()` is a JSON pointer to the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string pointer, const std::string& what)
      : Error(pointer.empty() ? what : pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  std::string pointer_;
};

/// A metric that is not defined for the given data (e.g. AUC with one class).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during optimisation.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mixitkit
