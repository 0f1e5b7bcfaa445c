#pragma once

#include <stdexcept>
#include <string>

namespace codegraph {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed manifest, config or array header.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Array contents that do not match their declared layout, or non-finite data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Logs or ratios that cannot be evaluated (non-positive inputs, zero denominators).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace codegraph
