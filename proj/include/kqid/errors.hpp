#pragma once

#include <stdexcept>
#include <string>

namespace kqid {

// Invalid arguments, malformed configuration, dimension mismatches.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

// Numerical breakdown at runtime: divergence, instability, rank collapse.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

}  // namespace kqid
