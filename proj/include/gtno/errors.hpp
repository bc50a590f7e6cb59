#pragma once

#include <stdexcept>
#include <string>

namespace gtno {

/// Process exit codes shared by every command-line entry point.
enum class ExitCode : int {
  ok = 0,
  numeric_fault = 1,
  usage = 2,
  io = 3,
};

/// Root of the library's exception hierarchy. Each error knows which exit
/// code the CLI should report for it.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// A NaN or Inf appeared in a computed value.
class NumericFault : public Error {
 public:
  explicit NumericFault(const std::string& what) : Error(what, ExitCode::numeric_fault) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what, ExitCode::usage) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::usage) {}
};

class IsolatedNodeError : public Error {
 public:
  explicit IsolatedNodeError(const std::string& what) : Error(what, ExitCode::usage) {}
};

class ZeroTargetError : public Error {
 public:
  explicit ZeroTargetError(const std::string& what) : Error(what, ExitCode::usage) {}
};

class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what) : Error(what, ExitCode::numeric_fault) {}
};

/// Explicit time step exceeds the stability limit of the scheme.
class CflError : public Error {
 public:
  explicit CflError(const std::string& what) : Error(what, ExitCode::usage) {}
};

/// Water depth reached zero or below.
class DryingError : public Error {
 public:
  explicit DryingError(const std::string& what) : Error(what, ExitCode::numeric_fault) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::io) {}
};

/// Malformed file contents. Subclasses name the specific defect.
class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& what) : IoError(what) {}
};

class MagicError : public FormatError {
 public:
  explicit MagicError(const std::string& what) : FormatError(what) {}
};

class TruncatedError : public FormatError {
 public:
  explicit TruncatedError(const std::string& what) : FormatError(what) {}
};

class VersionError : public FormatError {
 public:
  explicit VersionError(const std::string& what) : FormatError(what) {}
};

}  // namespace gtno
