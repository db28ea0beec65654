#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace increff {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Problems with user input: files, schemas, configuration. The CLI maps these to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

class ParseError : public InputError {
public:
    ParseError(std::size_t line, const std::string& what)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class DataError : public InputError {
public:
    using InputError::InputError;
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

/// Runtime estimation failures. The CLI maps these to exit code 3.
class EstimationError : public Error {
public:
    using Error::Error;
};

class DomainError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class PreconditionError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class FitError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

/// A target quantity has no empirical counterpart (e.g. an empty comparison group).
class EstimandUndefined : public EstimationError {
public:
    using EstimationError::EstimationError;
};

/// An internal invariant was broken; indicates a bug or corrupted nuisance output.
class InvariantViolation : public EstimationError {
public:
    using EstimationError::EstimationError;
};

} // namespace increff
