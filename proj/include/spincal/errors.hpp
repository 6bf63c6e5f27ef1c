#pragma once

#include <stdexcept>
#include <string>

namespace spincal {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument lies within the guard radius of a lattice point (pole or zero of sigma).
class LatticePoleError : public Error {
public:
    using Error::Error;
};

/// A series or product could not reach the requested precision.
class PrecisionError : public Error {
public:
    using Error::Error;
};

/// Two particles (or a particle difference and a lattice point) came too close.
class CollisionError : public Error {
public:
    using Error::Error;
};

/// An iterative solve, extrapolation or search did not converge within budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Continuation along a path or across perturbed phase points lost track of a root.
class TrackingError : public Error {
public:
    using Error::Error;
};

/// Bad user input (configuration, shapes, out-of-range parameters).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A requested numerical operation would overflow the exponent range.
class OverflowError : public Error {
public:
    using Error::Error;
};

/// An eigenvector cannot be normalized by its first component (the point is at or near a divisor point).
class NormalizationError : public Error {
public:
    using Error::Error;
};

} // namespace spincal
