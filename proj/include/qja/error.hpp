#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qja {

enum class ErrorKind {
  InvalidDimension,
  DimensionMismatch,
  InvalidArgument,
  NoConvergence,
  Integration,
  DarkState,
  Domain,
  NoEmission,
  SingularParameter,
  InsufficientClicks,
  UndefinedStatistic,
  DegeneratePosterior,
  InvalidEnvelope,
  IncompatibleHistogram,
  GridMismatch,
  NotOnGrid,
  Exhausted,
  VersionMismatch,
  Checksum,
  CorruptFile,
  Io,
  Config,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Thrown by the steady-state solver; carries the last residual norm.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& what, double residual)
      : Error(ErrorKind::NoConvergence, what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Thrown when a library file is truncated or malformed.
class CorruptFileError : public Error {
 public:
  CorruptFileError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::CorruptFile, what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace qja
