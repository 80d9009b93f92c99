#include "vnav/error.hpp"

namespace vnav {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::DegenerateYaw: return "DegenerateYaw";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NoConsensus: return "NoConsensus";
    case ErrorCode::RefinementFailed: return "RefinementFailed";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::EmptyFrame: return "EmptyFrame";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyProtocol: return "EmptyProtocol";
    case ErrorCode::EmptyLog: return "EmptyLog";
    case ErrorCode::InconsistentGraph: return "InconsistentGraph";
    case ErrorCode::NoPath: return "NoPath";
    case ErrorCode::LoadFailed: return "LoadFailed";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::RecordingFailed: return "RecordingFailed";
    case ErrorCode::NoGroundVisible: return "NoGroundVisible";
    case ErrorCode::ScaleUnavailable: return "ScaleUnavailable";
    case ErrorCode::InsufficientMatches: return "InsufficientMatches";
    case ErrorCode::PlanRejected: return "PlanRejected";
    case ErrorCode::InvalidSession: return "InvalidSession";
    case ErrorCode::GoalNotFound: return "GoalNotFound";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
  }
  return "Unknown";
}

}  // namespace vnav
