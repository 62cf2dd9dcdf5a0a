#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cel {

enum class ErrorKind {
    Io,
    Format,
    InvalidArgument,
    DimensionMismatch,
    EmptyClass,
    Divergence,
    Config,
};

const char* to_string(ErrorKind kind);

/// Base exception for every failure raised by the library. The kind lets the
/// CLI emit a structured error object without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised when training produces a non-finite loss or activation.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, const std::string& message)
        : Error(ErrorKind::Divergence, message), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace cel
