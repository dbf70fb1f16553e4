#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace iwin {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Extent/rank mismatch between tensors.
struct ShapeError : Error {
    using Error::Error;
};

// Window geometry that does not divide the grid.
struct LayoutError : Error {
    using Error::Error;
};

// Inconsistent hyperparameters (head divisibility, unknown variant, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

// Grid positions outside the feature map.
struct BoundsError : Error {
    using Error::Error;
};

// API misuse (non-scalar loss, foreign tape, ...).
struct ContractError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace iwin
