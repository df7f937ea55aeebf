#pragma once

#include <stdexcept>
#include <string>

namespace es {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File/container layout is wrong (bad magic, truncated payload, ...).
struct FormatError : Error {
    using Error::Error;
};

// Two artifacts that must agree do not (image/label counts, arm class counts).
struct ConsistencyError : Error {
    using Error::Error;
};

// Tensor/matrix extents incompatible with the requested operation.
struct ShapeError : Error {
    using Error::Error;
};

// A count-based precondition cannot be met (not enough samples, combinations).
struct CapacityError : Error {
    using Error::Error;
};

// Out-of-range scalar argument.
struct ParamError : Error {
    using Error::Error;
};

struct LabelError : Error {
    using Error::Error;
};

// NaN/Inf or solver breakdown.
struct NumericError : Error {
    using Error::Error;
};

// Integer overflow in a counting routine.
struct ArithmeticError : Error {
    using Error::Error;
};

// Training loop diverged; message carries epoch context.
struct TrainingError : Error {
    using Error::Error;
};

// A freeze/usage contract was violated by the caller.
struct ContractError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace es
