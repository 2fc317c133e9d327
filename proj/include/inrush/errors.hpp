#pragma once

#include <stdexcept>
#include <string>

namespace inrush {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A state variable became NaN or infinite.
class NonFiniteState : public Error {
public:
    using Error::Error;
};

/// An iterative solve hit its iteration cap.
class NoConvergence : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Least-squares normal equations are singular.
class DegenerateFit : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

/// Table backend requested for a scenario that is not on the precomputed grid.
class BackendMismatch : public Error {
public:
    using Error::Error;
};

class TableMissing : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class EmptyRollout : public Error {
public:
    using Error::Error;
};

/// Configuration fingerprint of an artifact does not match the active config.
class FingerprintMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace inrush
