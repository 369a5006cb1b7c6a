#pragma once

#include <stdexcept>
#include <string>

namespace xferlab {

// Config/CLI problems: bad JSON, invalid hyperparameters, duplicate injection.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset/checkpoint problems: missing files, corrupt payloads, id mismatches.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape/contract violations.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where the contract requires finite math.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace xferlab
