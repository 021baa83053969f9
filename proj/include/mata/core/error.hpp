#pragma once

#include <stdexcept>
#include <string>

namespace mata {

// Base for all library errors so callers can catch one type at the CLI edge.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatch; message names both shapes.
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Precondition violated (finished episode stepped, missing gradient, ...).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Bad or inconsistent run configuration, including unknown keys.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Filesystem and serialization failures.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace mata
