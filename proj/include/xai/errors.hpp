#pragma once

#include <stdexcept>
#include <string>

namespace xai {

// Error taxonomy shared across the toolkit. The CLI maps these to process
// exit codes: ConfigError -> 1, DataError family -> 2, everything in the
// feasibility/numerical family -> 3.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration or usage: unknown keys, out-of-range parameters,
// mismatched feature names.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or unusable input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Cell-level parse failure; message names the row and column.
class ParseError : public DataError {
public:
    using DataError::DataError;
};

// Filesystem failure; message names the path.
class IoError : public DataError {
public:
    using DataError::DataError;
};

// Caller violated an API contract (dimension mismatch, invalid index).
class ContractError : public Error {
public:
    using Error::Error;
};

// Requested computation is intractable at this size; message suggests an
// alternative.
class FeasibilityError : public Error {
public:
    using Error::Error;
};

// Degenerate numerics: singular systems, empty neighborhoods.
class NumericalError : public Error {
public:
    using Error::Error;
};

// An internal consistency identity failed beyond tolerance.
class IntegrityError : public Error {
public:
    using Error::Error;
};

}  // namespace xai
