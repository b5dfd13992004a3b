#pragma once

#include <stdexcept>
#include <string>

namespace rcl {

// Every library failure derives from Error so callers can separate our
// diagnostics from std:: failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite values, division by zero, degenerate statistics.
class NumericError : public Error {
public:
    using Error::Error;
};

// Invalid configuration or an operation called against its contract.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or incompatible file contents.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rcl
