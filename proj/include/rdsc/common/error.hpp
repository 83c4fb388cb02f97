#pragma once

#include <stdexcept>
#include <string>

namespace rdsc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or image dimensions do not fit the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared in a forward or backward pass.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed checkpoint, bitstream, image file or config.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Entropy-coded payload could not be decoded.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument outside the shape/format categories.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdsc
