#pragma once

#include <stdexcept>
#include <string>

namespace glc {

/// Base class for every error raised by the codec library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or image dimensions disagree with the model configuration.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Non-finite values (NaN/Inf) reached an operation that requires finite input.
class NonFiniteError : public Error {
  public:
    using Error::Error;
};

class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// Symbol outside a cdf's support, or a malformed cdf table.
class CoderError : public Error {
  public:
    using Error::Error;
};

/// The range decoder needed more bytes than the payload holds.
class TruncatedPayload : public CoderError {
  public:
    using CoderError::CoderError;
};

/// Malformed container: bad magic, truncation, field overflow.
class BitstreamError : public Error {
  public:
    using Error::Error;
};

class UnsupportedVersion : public BitstreamError {
  public:
    using BitstreamError::BitstreamError;
};

/// Stream was produced by a model whose entropy-decoding weights differ from the loaded one.
class ModelMismatch : public Error {
  public:
    using Error::Error;
};

/// Decoded symbols do not match the checksum recorded by the encoder.
class IntegrityError : public Error {
  public:
    using Error::Error;
};

/// Training stages were requested out of order or without an upstream checkpoint.
class StageOrderError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace glc
