#pragma once

#include <stdexcept>
#include <string>

namespace symde {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller asked for something the API does not support (bad arguments, wrong mode).
class UsageError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation was violated.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class LoweringError : public Error {
public:
    using Error::Error;
};

/// Step size underflow, non-finite norms and similar integration failures.
class NumericalFailure : public Error {
public:
    using Error::Error;
};

/// A past state was requested before the earliest stored anchor.
class PastUnderflow : public NumericalFailure {
public:
    using NumericalFailure::NumericalFailure;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Raised by load() for bad magic, version mismatch, truncation or checksum failure.
class LoadError : public IoError {
public:
    using IoError::IoError;
};

class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t line, std::size_t column)
        : Error(format(message, line, column)), line_(line), column_(column) {}

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& message, std::size_t line, std::size_t column) {
        return "line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message;
    }

    std::size_t line_;
    std::size_t column_;
};

} // namespace symde
