#pragma once

#include <stdexcept>
#include <string>

namespace fedsplit {

// Base for all library errors so callers can catch everything at once.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not conform (names the operands in the message).
struct DimensionError : Error {
    using Error::Error;
};

// An index is outside its valid range.
struct BoundsError : Error {
    using Error::Error;
};

// A caller violated a documented precondition.
struct ContractError : Error {
    using Error::Error;
};

// Federated aggregation received an unusable set of updates.
struct AggregationError : Error {
    using Error::Error;
};

// File parsing or filesystem failure.
struct IoError : Error {
    using Error::Error;
};

// A metric is undefined for the given inputs (e.g. single-class AUC).
struct UndefinedMetricError : Error {
    using Error::Error;
};

}  // namespace fedsplit
