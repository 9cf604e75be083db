#pragma once

#include <stdexcept>
#include <string>

namespace krrmiss {

/// Bad user input: malformed data, schema violations, invalid parameters.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a usable result.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace krrmiss
