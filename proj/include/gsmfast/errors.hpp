#pragma once

#include <stdexcept>
#include <string>

namespace gsmfast {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates a documented precondition.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

/// Tensor or matrix dimensions do not agree.
class ShapeMismatch : public InvalidArgument {
  public:
    using InvalidArgument::InvalidArgument;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class FileNotFound : public IoError {
  public:
    using IoError::IoError;
};

/// The file is a WAV file we do not decode (codec, bit depth, layout).
class UnsupportedFormat : public IoError {
  public:
    using IoError::IoError;
};

/// Structural problem in a RIFF/WAVE file (bad header, zero channels, ...).
class FormatError : public IoError {
  public:
    using IoError::IoError;
};

/// The data chunk is shorter than its header claims.
class TruncatedData : public IoError {
  public:
    using IoError::IoError;
};

/// A matrix is singular or too ill-conditioned for the requested kernel.
class SingularMatrix : public Error {
  public:
    SingularMatrix(const std::string& what, double condition_estimate)
        : Error(what), condition_estimate_(condition_estimate) {}

    double condition_estimate() const noexcept { return condition_estimate_; }

  private:
    double condition_estimate_;
};

/// Scale normalization hit a zero (or non-finite) divisor.
class DegenerateParameters : public Error {
  public:
    using Error::Error;
};

/// The requested operation is not defined for this GSM variant.
class UnsupportedVariant : public InvalidArgument {
  public:
    using InvalidArgument::InvalidArgument;
};

/// Numerical integration failed to reach its error target.
class QuadratureError : public Error {
  public:
    QuadratureError(const std::string& what, double achieved_error)
        : Error(what), achieved_error_(achieved_error) {}

    double achieved_error() const noexcept { return achieved_error_; }

  private:
    double achieved_error_;
};

} // namespace gsmfast
