#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pinn {

enum class ErrorCode {
  DimensionMismatch,
  NonFinite,
  NonSymmetric,
  SingularMatrix,
  ZeroRow,
  ZeroDiagonal,
  AngleOutOfRange,
  BadTopology,
  NonScalarOutput,
  QuadratureNotConverged,
  NoExactSolution,
  NonFiniteLoss,
  InvalidArgument,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library. `where` carries the offending
/// indices when the error is positional (row index, layer/row pair, epoch).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::vector<std::size_t> where = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        where_(std::move(where)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::size_t>& where() const noexcept { return where_; }

 private:
  ErrorCode code_;
  std::vector<std::size_t> where_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NonSymmetric: return "NonSymmetric";
    case ErrorCode::SingularMatrix: return "SingularMatrix";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::ZeroDiagonal: return "ZeroDiagonal";
    case ErrorCode::AngleOutOfRange: return "AngleOutOfRange";
    case ErrorCode::BadTopology: return "BadTopology";
    case ErrorCode::NonScalarOutput: return "NonScalarOutput";
    case ErrorCode::QuadratureNotConverged: return "QuadratureNotConverged";
    case ErrorCode::NoExactSolution: return "NoExactSolution";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace pinn
