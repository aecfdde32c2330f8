#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace nmc {

/// Base for every error raised by the library. Callers that only need a
/// message catch this; the CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, invalid parameters, broken invariants.
class InvalidInput : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public InvalidInput {
public:
    DimensionMismatch(std::size_t a, std::size_t b)
        : InvalidInput("dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b)) {}
};

/// The evaluated kernel at some distribution is not a stochastic matrix.
class KernelInvalid : public InvalidInput {
public:
    using InvalidInput::InvalidInput;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite intermediate values in a numerical routine.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A fixed-point iteration ran out of budget. Carries the last iterate so
/// callers can inspect how far it got.
class Nonconvergence : public Error {
public:
    Nonconvergence(const std::string& what, std::vector<double> last, double residual)
        : Error(what), last_iterate(std::move(last)), residual(residual) {}

    std::vector<double> last_iterate;
    double residual;
};

}  // namespace nmc
