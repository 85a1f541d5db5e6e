#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace flowlab {

// Error taxonomy. Configuration errors are caller bugs (bad dimensions,
// inconsistent specs); usage errors are protocol violations (stepping a
// finished episode); divergence errors carry the parameter path or step
// index of the first non-finite quantity.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct WorldError : std::runtime_error {
  explicit WorldError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TaskParseError : std::runtime_error {
  TaskParseError(const std::string& msg, std::size_t position)
      : std::runtime_error(msg + " (at position " + std::to_string(position) + ")"),
        position(position) {}
  std::size_t position;
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kLogTwoPi = 1.8378770664093454836;

}  // namespace flowlab
