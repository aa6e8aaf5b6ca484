#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace adaptreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector or matrix sizes that do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// The design matrix (or its normal matrix) is rank deficient.
class DegenerateDesignError : public Error {
public:
    using Error::Error;
};

/// The projected operator has a (numerically) zero singular value.
class RankError : public Error {
public:
    using Error::Error;
};

/// A parameter outside its admissible range.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Too few points to fit a rate.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Malformed or incomplete configuration. `line` is 1-based, 0 if unknown.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Malformed input data. `row` is the 1-based file line, 0 if unknown.
class DataError : public Error {
public:
    DataError(const std::string& what, std::size_t row = 0)
        : Error(row ? "row " + std::to_string(row) + ": " + what : what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

}  // namespace adaptreg
