#pragma once

#include <stdexcept>
#include <string>

namespace tigs {

// Error categories map 1:1 onto CLI exit codes (see tools/tigs_main.cpp).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct ValueError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct IndexError : Error {
    using Error::Error;
};
struct MaskError : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct SupportError : Error {
    using Error::Error;
};

// Signals for degenerate inputs the callers are expected to pre-check.
struct EmptyRegionError : Error {
    using Error::Error;
};
struct EmptyHeadError : Error {
    using Error::Error;
};

}  // namespace tigs
