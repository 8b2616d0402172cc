#pragma once

#include <stdexcept>
#include <string>

namespace deferlab {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: out-of-range labels, empty batches, bad values.
struct InvalidInputError : Error {
    using Error::Error;
};

/// Vector/matrix shape does not match the declared K and M.
struct InvalidDimensionError : Error {
    using Error::Error;
};

/// A computation degenerated past the representable range
/// (e.g. a fractional estimator dividing by zero).
struct OverflowError : Error {
    using Error::Error;
};

/// A requested minimizer does not exist at the boundary of the
/// parameter domain (diverging scores).
struct BoundaryError : Error {
    using Error::Error;
};

/// Iterative minimization stopped without reaching stationarity.
struct ConvergenceError : Error {
    ConvergenceError(const std::string& msg, double grad_norm)
        : Error(msg), final_grad_norm(grad_norm) {}
    double final_grad_norm;
};

/// Training produced a non-finite loss.
struct DivergedError : Error {
    DivergedError(const std::string& msg, int epoch_, int batch_)
        : Error(msg), epoch(epoch_), batch(batch_) {}
    int epoch;
    int batch;
};

/// Config or dataset file could not be parsed; message carries the
/// offending key path or row number.
struct ParseError : Error {
    using Error::Error;
};

}  // namespace deferlab
