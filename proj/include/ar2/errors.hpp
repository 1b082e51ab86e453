#pragma once

#include <stdexcept>
#include <string>

namespace ar2 {

// Error taxonomy mirrored by the CLI exit codes: config=2, data=3, numeric=4.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/model dimension violations (bad conv shapes, label out of range, ...).
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration: unknown keys, out-of-range hyperparameters.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Dataset / file ingestion failures: malformed records, truncation, bad magic.
struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numerical failures: non-finite losses, undefined CE (zero baseline error).
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace ar2
