#pragma once

#include <stdexcept>
#include <string>

namespace ifr {

// Base for every error raised by the library. Messages are single-line.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// Wrong magic bytes, unsupported version or inconsistent header fields.
class FormatError : public Error {
public:
    using Error::Error;
};

// File ended before the header-declared payload was read.
class TruncationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Points at or behind the camera plane.
class ProjectionError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace ifr
