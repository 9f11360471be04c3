#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rmab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The arm or scenario violates a structural invariant.
class InvalidModel : public Error {
public:
    using Error::Error;
};

/// An operation was called outside its domain (e.g. phi on a non-switchable state).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Value iteration did not reach the requested tolerance.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double residual, long sweeps)
        : Error(what + " (residual " + std::to_string(residual) + " after " +
                std::to_string(sweeps) + " sweeps)"),
          residual_(residual), sweeps_(sweeps) {}

    double residual() const noexcept { return residual_; }
    long sweeps() const noexcept { return sweeps_; }

private:
    double residual_;
    long sweeps_;
};

/// A state space or enumeration exceeds its configured cap.
class SizeError : public Error {
public:
    SizeError(const std::string& what, std::size_t count)
        : Error(what + " (count " + std::to_string(count) + ")"), count_(count) {}

    std::size_t count() const noexcept { return count_; }

private:
    std::size_t count_;
};

} // namespace rmab
