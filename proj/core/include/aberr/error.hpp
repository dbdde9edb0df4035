#pragma once

#include <stdexcept>
#include <string>

namespace aberr {

/// Failure categories. The CLI maps these onto its exit codes.
enum class ErrorKind {
  argument,   // bad argument or shape mismatch
  config,     // inconsistent configuration (missing targets for an enabled loss term, ...)
  io,         // unreadable or unwritable file
  numerical,  // non-finite loss, degenerate aperture, divergence
  protocol,   // train/test lens leakage
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what) : Error(ErrorKind::argument, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Raised when the aperture mask contains no pixels or the PSF carries no energy.
class DegenerateApertureError : public NumericalError {
 public:
  explicit DegenerateApertureError(const std::string& what) : NumericalError(what) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error(ErrorKind::protocol, what) {}
};

}  // namespace aberr
