#pragma once

#include <stdexcept>
#include <string>

namespace xmam {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lengths or shapes that do not compose (parameter vectors, tensors, layers).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument value was violated.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (bad magic number, inconsistent header).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written, or ended early.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration could not be parsed or violates a constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace xmam
