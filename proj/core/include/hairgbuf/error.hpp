#pragma once

#include <stdexcept>
#include <string>

namespace hairgbuf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation precondition (bad shape, bad range, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be read, parsed, or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A frame cannot be processed (e.g. hair pixels but no depth sample at all).
class DegenerateFrame : public Error {
 public:
  using Error::Error;
};

}  // namespace hairgbuf
