#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vnav {

enum class ErrorCode {
  InvalidDepth,
  DegenerateYaw,
  InsufficientData,
  NoConsensus,
  RefinementFailed,
  DegenerateInput,
  EmptyFrame,
  DimensionMismatch,
  EmptyProtocol,
  EmptyLog,
  InconsistentGraph,
  NoPath,
  LoadFailed,
  InvalidSpec,
  RecordingFailed,
  NoGroundVisible,
  ScaleUnavailable,
  InsufficientMatches,
  PlanRejected,
  InvalidSession,
  GoalNotFound,
  BudgetExceeded,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this exception type; callers
// branch on code() rather than on the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), detail_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace vnav
