#pragma once

#include <stdexcept>
#include <string>

namespace panelnet {

// Exit-code mapping used by the CLI: config 2, data 3, numeric 4.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint written by an incompatible model configuration or format version.
class VersionError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class MergeError : public NumericError {
 public:
  using NumericError::NumericError;
};

class LossError : public NumericError {
 public:
  using NumericError::NumericError;
};

class MetricError : public NumericError {
 public:
  using NumericError::NumericError;
};

class GeometryError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace panelnet
