#pragma once

#include <stdexcept>
#include <string>

namespace fdiff {

/// Operand shapes (domain, resolution, sizes) do not agree.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file payload.
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A NaN/Inf appeared, or a numerical limit (CFL, range) was violated.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `key()` names the offending field.
class ConfigError : public std::invalid_argument {
  public:
    ConfigError(std::string key, const std::string& what)
        : std::invalid_argument(key.empty() ? what : key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

}  // namespace fdiff
