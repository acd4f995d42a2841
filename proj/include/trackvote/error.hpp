#pragma once

#include <stdexcept>
#include <string>

namespace trackvote {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data: bad serialization, schema violations, dimension
/// mismatches, broken invariants of ingested records.
class DataError : public Error {
public:
    using Error::Error;
};

class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// A record failed validation; `line()` is 1-based, 0 when not line oriented.
class SchemaError : public DataError {
public:
    SchemaError(const std::string& what, std::size_t line = 0)
        : DataError(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Numeric precondition failed (non-positive temperature, sigma, ...) or a
/// computation produced a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace trackvote
