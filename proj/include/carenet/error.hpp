#pragma once

#include <stdexcept>
#include <string>

namespace carenet {

/// Base of every error thrown by the library. The CLI maps the concrete
/// subclass to a process exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition violated by the caller (bad shape, bad enum, bad range).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but carries no usable information (constant
/// spectrum, identical rows, empty cluster set, ...).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// On-disk data failed validation (magic, version, checksum, layout).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training or inference produced non-finite values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace carenet
