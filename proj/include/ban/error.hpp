#pragma once

#include <stdexcept>
#include <string>

namespace ban {

// Error taxonomy shared by every module. Each carries a one-line cause that
// the CLI prints verbatim before exiting non-zero.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or raster dimensions that do not fit together.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid configuration values (taps, targets, strides, schedule, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite values produced during forward or training.
class NumericError : public Error {
public:
    using Error::Error;
};

// Bad dataset contents: orphan files, out-of-range labels, undecodable images.
class DataError : public Error {
public:
    using Error::Error;
};

// Malformed or incomplete checkpoint containers.
class CheckpointError : public Error {
public:
    using Error::Error;
};

}  // namespace ban
