#pragma once

#include <stdexcept>
#include <string>

namespace knobrec {

/// Shape mismatch between operands.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed, missing or unusable input data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or model setup.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values during training or a failed numerical check.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable, truncated or corrupted checkpoint file.
class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace knobrec
