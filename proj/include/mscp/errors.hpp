#ifndef MSCP_ERRORS_HPP
#define MSCP_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mscp {

enum class ErrorCode {
  EmptyCalibration,
  InvalidAlpha,
  IncompatibleSets,
  EmptyEvaluation,
  InfeasibleAllocation,
  EmptyTraining,
  ShapeError,
  InvalidConfig,
  InvalidDistribution,
  NonFiniteScore,
  ParseError,
  IOError,
  UsageError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyCalibration: return "EmptyCalibration";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::IncompatibleSets: return "IncompatibleSets";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::InfeasibleAllocation: return "InfeasibleAllocation";
    case ErrorCode::EmptyTraining: return "EmptyTraining";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidDistribution: return "InvalidDistribution";
    case ErrorCode::NonFiniteScore: return "NonFiniteScore";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IOError: return "IOError";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

// All library failures are reported through this one exception type; the
// code lets callers (and the CLI exit-code mapping) branch on the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mscp

#endif  // MSCP_ERRORS_HPP
