#pragma once

#include <stdexcept>
#include <string>

namespace arcmark {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Out-of-range argument, inconsistent lengths, invalid configuration.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Sinkhorn failed to reach the marginal tolerance.
class SolverError : public Error {
public:
    SolverError(const std::string& what, double row_residual, double col_residual, int iterations)
        : Error(what), row_residual_(row_residual), col_residual_(col_residual), iterations_(iterations) {}

    double row_residual() const noexcept { return row_residual_; }
    double col_residual() const noexcept { return col_residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double row_residual_;
    double col_residual_;
    int iterations_;
};

/// Two candidate tokens are equidistant from a channel-input angle.
class TieError : public Error {
public:
    using Error::Error;
};

/// A distribution source ran out of records.
class StreamError : public Error {
public:
    using Error::Error;
};

/// Request exceeds what the exhaustive decoder supports.
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Every candidate message scored +inf.
class DecodeFailure : public Error {
public:
    using Error::Error;
};

} // namespace arcmark
