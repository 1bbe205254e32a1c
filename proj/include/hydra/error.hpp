#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hydra {

/// Base of every exception raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or sample dimensions disagree with what an operation expects.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or Inf appeared in a result that must be finite.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An invalid configuration value (schedule, weight decay, cost caps, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training loss blew up or went non-finite. Carries the offending step.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A replayed trajectory did not reproduce the recorded snapshots bit-for-bit.
class ReplayDivergenceError : public Error {
public:
    explicit ReplayDivergenceError(std::size_t step)
        : Error("replay diverged from the recorded trajectory at step " + std::to_string(step)),
          step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual)
        : Error(what + " (relative residual " + std::to_string(residual) + ")"),
          residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// The Neumann iteration grew without bound; the scale factor is too small.
class ScalingError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input file.
class FormatError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedFileError : public FormatError {
public:
    using FormatError::FormatError;
};

class CountMismatchError : public FormatError {
public:
    using FormatError::FormatError;
};

} // namespace hydra
