#pragma once

#include <stdexcept>
#include <string>

namespace neurodec {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A required file is missing or unreadable.
struct LoadError : Error {
    using Error::Error;
};

/// A file exists but a row/field cannot be parsed; message carries the line number.
struct ParseError : Error {
    using Error::Error;
};

/// Data violates a dataset invariant; message names the invariant.
struct ValidationError : Error {
    using Error::Error;
};

/// User-supplied configuration is invalid or infeasible.
struct ConfigError : Error {
    using Error::Error;
};

/// Matrix/vector dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

/// Labels do not span at least two classes (or a class is empty).
struct DegenerateLabelsError : Error {
    using Error::Error;
};

/// Regression target has too few distinct values to quantize.
struct DegenerateTargetError : Error {
    using Error::Error;
};

/// Model fitting failed on degenerate input.
struct FitError : Error {
    using Error::Error;
};

/// A metric is undefined for the given input (e.g. constant target dimension).
struct MetricError : Error {
    using Error::Error;
};

/// A report/document is missing a field required by the requested operation.
struct SchemaError : Error {
    using Error::Error;
};

/// An operation needs an input modality the dataset does not carry.
struct UnsupportedInputError : Error {
    using Error::Error;
};

}  // namespace neurodec
