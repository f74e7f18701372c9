#pragma once
#include <stdexcept>
#include <string>

namespace odeinv {

// Error taxonomy mirrors CLI exit codes: config 2, prerequisite 3, numeric 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct PrerequisiteError : std::runtime_error {
  explicit PrerequisiteError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or truncated on-disk artifacts.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace odeinv
