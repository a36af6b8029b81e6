#pragma once

#include <stdexcept>

namespace magshift {

// Invalid user-supplied configuration values or files.
class ConfigError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input table header does not match the expected schema.
class SchemaError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A row or field could not be parsed.
class ParseError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Duplicate identifiers or mutually inconsistent records.
class IntegrityError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Input data too small or otherwise unusable for the requested operation.
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A requested partition cannot be constructed at all.
class InfeasibleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor or matrix dimensions do not line up.
class ShapeError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An index is outside its valid range.
class IndexError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// An operation was called in a state that does not support it.
class StateError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite quantity.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A model training or fitting run could not start or finish.
class TrainError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A fit failed for statistical reasons (e.g. single-class labels).
class FitError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A requested metric is undefined on the given data.
class UndefinedMetricError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A mixing policy constraint would be violated.
class PolicyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem or serialization failure.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace magshift
