#pragma once

#include <stdexcept>
#include <string>

namespace conserve {

/// Operand shapes are incompatible for the requested operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An input lies outside the mathematical domain of an operation
/// (sqrt of a non-positive entry, negative conserved target, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed, truncated or inconsistent on-disk data.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values or an unstable solver.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid command-line or configuration input.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace conserve
