#pragma once

#include <stdexcept>

namespace gate {

// Base type for all errors thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data (CoNLL-U, instance files, feature files, checkpoints).
struct ParseError : Error {
  using Error::Error;
};

// Invalid configuration or usage: missing files, bad flag combinations.
struct ConfigError : Error {
  using Error::Error;
};

// Shape mismatches and non-finite values in array computations.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace gate
