#ifndef BIOAUG_ERRORS_HPP
#define BIOAUG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bioaug {

// Invalid or inconsistent configuration (bad hyperparameter, unknown key, ...).
// CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or unreadable data file. CLI maps this to exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value produced by a numeric kernel. CLI maps this to exit code 4.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes passed to a primitive.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bioaug

#endif
