#pragma once

#include <stdexcept>
#include <string>

namespace loh {

// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller handed us arguments that violate a documented precondition.
struct InputError : Error {
    using Error::Error;
};

// A file or byte stream does not match its declared format.
struct FormatError : Error {
    using Error::Error;
};

}  // namespace loh
