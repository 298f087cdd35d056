#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qs {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments, shape mismatches, malformed configuration.
class InputError : public Error {
public:
    using Error::Error;
};

/// Malformed grid/chain/observation file. Carries the offending line (1-based, 0 if unknown).
class ParseError : public InputError {
public:
    ParseError(const std::string& what, std::size_t line)
        : InputError(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A user model (observation density, coefficients) returned an out-of-domain value.
class ModelError : public InputError {
public:
    using InputError::InputError;
};

/// Non-finite arithmetic along a computation.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, double last_residual)
        : NumericError(what + " (last residual " + std::to_string(last_residual) + ")"),
          residual_(last_residual) {}

    double last_residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// The un-normalized filter lost all its mass at some step.
class DegenerateObservationError : public NumericError {
public:
    DegenerateObservationError(const std::string& what, std::size_t step)
        : NumericError(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

} // namespace qs
