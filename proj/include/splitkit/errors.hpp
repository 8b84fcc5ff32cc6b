#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splitkit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit together.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A precondition on numerical input (positivity, range, finiteness) failed.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative solver or estimator did not reach its tolerance.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual, std::size_t iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}

    /// Relative residual (or relative change for eigen estimates) at exit.
    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

/// A time integration left the bounded regime.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t level)
        : Error(what), level_(level) {}

    /// Ladder level (or step index) at which the blow-up was detected.
    std::size_t level() const noexcept { return level_; }

private:
    std::size_t level_;
};

}  // namespace splitkit
