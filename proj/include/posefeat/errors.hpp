#pragma once

#include <stdexcept>
#include <string>

namespace posefeat {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input data could not be read or is inconsistent (files, fixtures, datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A file parsed but its content is malformed. `kind` distinguishes failure classes.
class ParseError : public DataError {
 public:
  enum class Kind { kMalformedHeader, kTruncated, kUnsupported, kInvalidValue, kMissing };

  ParseError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Non-finite values or a numerically degenerate problem.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Rigid fit on rank-deficient input.
class DegenerateError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// RANSAC could not find a supported hypothesis.
class RegistrationFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Positive mining produced no correspondence (disjoint clouds or wrong pose).
class MiningError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace posefeat
