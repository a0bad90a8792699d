#pragma once

#include <stdexcept>
#include <string>

namespace cvxspline {

enum class ErrorCode {
  invalid_argument,
  degenerate_design,
  solver_stalled,
  numerical_breakdown,
  oracle_inconsistency,
  family_too_small,
  sample_too_small,
  insufficient_data,
  study_invalid,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::degenerate_design: return "degenerate-design";
    case ErrorCode::solver_stalled: return "solver-stalled";
    case ErrorCode::numerical_breakdown: return "numerical-breakdown";
    case ErrorCode::oracle_inconsistency: return "oracle-inconsistency";
    case ErrorCode::family_too_small: return "family-too-small";
    case ErrorCode::sample_too_small: return "sample-too-small";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::study_invalid: return "study-invalid";
  }
  return "unknown";
}

/// Exception carrying a machine-readable category; what() is "<category>: <message>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cvxspline
