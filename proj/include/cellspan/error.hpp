#pragma once

#include <stdexcept>
#include <string>

namespace cellspan {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (bad file, invariant violation).
// The CLI maps this to exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

// Numerical failure: singular system, divergence, non-finite intermediate.
// The CLI maps this to exit code 3.
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace cellspan
