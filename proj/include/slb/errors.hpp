#pragma once

#include <stdexcept>
#include <string>

namespace slb {

// Bad user-supplied configuration (dimensions, ranges, unknown keys, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad numeric input (non-finite entries, shape mismatch at call sites).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// An exact/enumerative routine was asked to exceed its work budget.
struct BudgetError : std::runtime_error {
  explicit BudgetError(const std::string& msg) : std::runtime_error(msg) {}
};

// Problems reading external data files.
struct IngestError : std::runtime_error {
  explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace slb
