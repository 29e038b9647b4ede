#pragma once

#include <stdexcept>
#include <string>

namespace cmap {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents or unparseable text input.
class FormatError : public Error {
public:
  explicit FormatError(const std::string& what) : Error("format error: " + what) {}

protected:
  struct Raw {};
  FormatError(Raw, const std::string& what) : Error(what) {}
};

/// Declared tensor size disagrees with the payload actually present.
class LengthMismatch : public FormatError {
public:
  explicit LengthMismatch(const std::string& what)
      : FormatError(Raw{}, "length mismatch: " + what) {}
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
  IoError(const std::string& path, const std::string& what)
      : Error(what + ": " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

/// Operands with incompatible dimensions.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& what) : Error("dimension mismatch: " + what) {}
};

/// Out-of-range values handed to a constructor or operation.
class ValueError : public Error {
public:
  using Error::Error;
};

class EmptyMaskError : public Error {
public:
  EmptyMaskError() : Error("empty support mask") {}
};

/// Solver configuration whose Lipschitz bound is not below one.
class ContractionError : public Error {
public:
  explicit ContractionError(double bound)
      : Error("contraction condition violated: alpha/(delta+epsilon)^2 = " +
              std::to_string(bound) + " >= 1"),
        bound_(bound) {}
  double bound() const noexcept { return bound_; }

private:
  double bound_;
};

/// Dense oracle asked to materialize a matrix above its size cap.
class OracleLimitError : public Error {
public:
  using Error::Error;
};

}  // namespace cmap
