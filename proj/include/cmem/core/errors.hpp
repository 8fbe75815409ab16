#pragma once

#include <stdexcept>
#include <string>

namespace cmem {

/// Base of every error raised by the library. `exit_code()` is what the CLI returns.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    [[nodiscard]] virtual int exit_code() const noexcept { return 1; }
};

/// Argument outside the mathematical domain of an operation (alpha >= 1/2, omega = 1, ...).
class DomainError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 2; }
};

/// Inconsistent configuration: misaligned grids, schema violations, burn-in too short.
class ConfigError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 2; }
};

/// Model assumption violated (no Gaussian component to reweight, q < p-1, ...).
class ModelError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 2; }
};

/// Quadrature / ODE / series failure.
class NumericError : public Error {
public:
    using Error::Error;
    [[nodiscard]] int exit_code() const noexcept override { return 3; }
};

}  // namespace cmem
