#pragma once

#include <stdexcept>
#include <string>

namespace reflectsep {

// Bad or missing input data (files, directories, malformed configs/checkpoints).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation produced a non-finite value; carries the offending term name.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace reflectsep
