#pragma once

#include <stdexcept>
#include <string>

namespace lpr {

// Dimension/shape violations (messages name the offending shapes).
struct shape_error : std::invalid_argument {
    explicit shape_error(const std::string& what) : std::invalid_argument(what) {}
};

// Invalid argument values (out-of-range labels, bad fractions, negative weights...).
struct input_error : std::invalid_argument {
    explicit input_error(const std::string& what) : std::invalid_argument(what) {}
};

// Numeric failures: solver non-convergence, non-finite results.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

// A matrix expected to be symmetric positive definite was not.
struct not_positive_definite_error : numeric_error {
    explicit not_positive_definite_error(const std::string& what) : numeric_error(what) {}
};

// Stream construction could not satisfy its constraints.
struct generation_error : std::runtime_error {
    explicit generation_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lpr
