#pragma once

#include <stdexcept>
#include <string>

namespace delaypmp {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A time or width that should sit on the mesh does not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A query outside the region where an object is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent problem configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a singular system during a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An iteration that did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace delaypmp
