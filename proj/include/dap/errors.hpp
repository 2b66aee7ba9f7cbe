#pragma once

#include <stdexcept>
#include <string>

namespace dap {

// Bad wiring: shapes, hyperparameter ranges, layer specs.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad data: non-finite values, malformed files, degenerate inputs.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller called an API outside its contract (missing checkpoint, wrong mode).
class UsageError : public std::runtime_error {
public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// A state the engine should never reach.
class InternalError : public std::logic_error {
public:
  explicit InternalError(const std::string& msg) : std::logic_error(msg) {}
};

} // namespace dap
