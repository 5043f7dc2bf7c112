#pragma once

#include <stdexcept>
#include <string>

namespace tzsl {

// Base class for everything thrown by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input: config files, CLI flags, malformed option values. Exit code 1.
struct ConfigError : Error {
  using Error::Error;
};

// Broken datasets / checkpoints: missing files, shape mismatches, non-finite
// payloads, labels out of range. Exit code 2.
struct DataError : Error {
  using Error::Error;
};

// Numeric failure at run time (non-finite loss, singular solve, degenerate
// feature vector). Exit code 2.
struct NumericError : Error {
  using Error::Error;
};

// A documented usage contract was violated (e.g. unseen features touched
// during inductive training). Exit code 2.
struct ContractError : Error {
  using Error::Error;
};

}  // namespace tzsl
