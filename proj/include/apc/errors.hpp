#pragma once

#include <stdexcept>
#include <string>

namespace apc {

// Shape or width disagreement between tensors/layers/environments.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf produced where the pipeline requires finite values.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API misuse: violated precondition, missing gradients, double backward.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VersionError : IoError {
    using IoError::IoError;
};
struct ChecksumError : IoError {
    using IoError::IoError;
};
struct TruncatedError : IoError {
    using IoError::IoError;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace apc
