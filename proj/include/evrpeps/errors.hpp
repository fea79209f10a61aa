#pragma once

#include <stdexcept>
#include <string>

namespace evrpeps {

/// Input data violates a model invariant (bad instance field, bad config).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File carries an unknown or incompatible schema version.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& msg) : std::runtime_error(msg) {}
};

/// The simulation was driven into a state that must be unreachable when
/// callers respect the feasibility masks.
class SimError : public std::logic_error {
 public:
  explicit SimError(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace evrpeps
