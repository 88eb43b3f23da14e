#pragma once

#include <stdexcept>
#include <string>

namespace radiart {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// API misuse: bad arguments, shape mismatches, out-of-range selections.
class UsageError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf in parameters, values or gradients.
class NumericError : public Error {
public:
    using Error::Error;
};

class DatasetFormatError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Training loss became non-finite.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// External embedding bridge unreachable, timed out or spoke bad protocol.
class BridgeError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace radiart
