#pragma once

#include <stdexcept>
#include <string>

namespace anatlas {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
struct IoError : Error {
    using Error::Error;
};

/// Recognized container but unsupported layout (datatype, magic, ...).
struct FormatError : Error {
    using Error::Error;
};

/// A label volume holds values that cannot be label IDs.
struct CorruptLabelError : Error {
    using Error::Error;
};

/// Dimensionality or array-extent violation.
struct ShapeError : Error {
    using Error::Error;
};

/// Config file failed validation; message names the offending key.
struct ValidationError : Error {
    using Error::Error;
};

/// Two volumes that must share a grid do not.
struct GeometryMismatchError : Error {
    using Error::Error;
};

/// Plane fit on too few or collinear points.
struct DegenerateFitError : Error {
    using Error::Error;
};

/// Phantom spec is internally inconsistent (e.g. overlapping structures).
struct SpecError : Error {
    using Error::Error;
};

} // namespace anatlas
