#pragma once

#include <stdexcept>
#include <string>

namespace snnwb {

// Base for everything thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Inconsistent shapes, bad topology documents, incompatible checkpoints.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Data values out of contract (pixel range, class index, activity fraction).
class InputError : public Error {
public:
    using Error::Error;
};

// File and format problems (magic numbers, truncation, missing blobs).
class IoError : public Error {
public:
    using Error::Error;
};

// Runtime training failures (divergence, non-finite activations).
class TrainError : public Error {
public:
    using Error::Error;
};

}  // namespace snnwb
