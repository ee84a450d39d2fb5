#include "ntkdfl/error.hpp"

namespace ntkdfl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::InfeasibleDegree: return "InfeasibleDegree";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingEvaluation: return "MissingEvaluation";
    case ErrorCode::Numerical: return "Numerical";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace ntkdfl
