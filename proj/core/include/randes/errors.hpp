#pragma once

#include <stdexcept>
#include <string>

namespace randes {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor name sets or shapes disagree between operands. The message names
// the first offending tensor in lexicographic order.
struct StructuralMismatchError : Error {
    using Error::Error;
};

// An operation received input it cannot define a result for (e.g. the
// cosine of a zero-norm operand).
struct DegenerateInputError : Error {
    using Error::Error;
};

// Checkpoint layer names could not be organized into a consistent schema.
struct SchemaError : Error {
    using Error::Error;
};

// A transform specification is invalid or internally inconsistent.
struct InvalidSpecError : Error {
    using Error::Error;
};

// A non-orthogonal transform cannot be inverted because a diagonal entry
// is numerically too close to zero.
struct NumericalDegeneracyError : Error {
    using Error::Error;
};

// A task id was not found in the store registry.
struct UnknownTaskError : Error {
    using Error::Error;
};

// Stored bookkeeping disagrees with supplied data (hash mismatch,
// delta norm mismatch, corrupt or wrong-version store files).
struct IntegrityError : Error {
    using Error::Error;
};

// Invalid user-facing configuration (bad lambda, bad grid, unknown mode,
// duplicate task ids, ...).
struct ConfigError : Error {
    using Error::Error;
};

// Filesystem level failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace randes
