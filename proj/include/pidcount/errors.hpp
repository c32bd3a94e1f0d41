#pragma once

#include <stdexcept>
#include <string>

namespace pidcount {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or image sizes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameters, variants or sizes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data violating a value contract (e.g. non-binary masks).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Misuse of an object's lifecycle (e.g. running backward twice).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Dataset, image or checkpoint files that cannot be read.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Malformed config text; carries the offending line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// NaN/Inf encountered during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Synthetic data that cannot be generated with the requested parameters.
class GenerationError : public Error {
 public:
  using Error::Error;
};

/// A metric whose definition does not apply (e.g. counting accuracy with zero GT objects).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace pidcount
