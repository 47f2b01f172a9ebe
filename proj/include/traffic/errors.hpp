#pragma once

#include <stdexcept>
#include <string>

namespace traffic {

// Bad shapes, bad values, bad configs: anything a caller handed us that
// cannot be worked with. CLI maps these to exit code 1.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

class ShapeError : public ValidationError {
public:
    explicit ShapeError(const std::string& what) : ValidationError(what) {}
};

// File and parse problems; messages carry path and line context.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// States the program itself should never reach (diverged numerics, broken
// internal bookkeeping). CLI maps these to exit code 2.
class InternalError : public std::runtime_error {
public:
    explicit InternalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace traffic
