#pragma once

#include <stdexcept>
#include <string>

namespace moca {

// Base of every error thrown by the library. The CLI maps ValidationError
// and friends to exit code 1 and everything else to exit code 2.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes do not compose.
struct DimensionError : Error {
  using Error::Error;
};

// A user-supplied value is outside its declared domain.
struct ValidationError : Error {
  using Error::Error;
};

// A caller broke a precondition that is not about user data.
struct ContractError : Error {
  using Error::Error;
};

// Key not declared (modality/class pair, parameter name, ...).
struct LookupError : Error {
  using Error::Error;
};

// Mathematically undefined input, e.g. normalizing a zero vector.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Malformed file contents.
struct ParseError : Error {
  using Error::Error;
};

struct DuplicateKeyError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace moca
