#include "qs/error.hpp"

namespace qs {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::RowInvariantViolation: return "RowInvariantViolation";
    case ErrorCode::EncodingError: return "EncodingError";
    case ErrorCode::TimestampParseError: return "TimestampParseError";
    case ErrorCode::EmptyStream: return "EmptyStream";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::MissingDayRecord: return "MissingDayRecord";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorCode::NonFiniteFeature: return "NonFiniteFeature";
    case ErrorCode::UnfittedModel: return "UnfittedModel";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::InvalidHyperparameter: return "InvalidHyperparameter";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::SingleClassInput: return "SingleClassInput";
    case ErrorCode::TooManyFeatures: return "TooManyFeatures";
    case ErrorCode::EmptyBackground: return "EmptyBackground";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::MissingAttribution: return "MissingAttribution";
    case ErrorCode::CatalogMissing: return "CatalogMissing";
    case ErrorCode::UnknownPlan: return "UnknownPlan";
    case ErrorCode::InvalidTransition: return "InvalidTransition";
    case ErrorCode::InvalidProportions: return "InvalidProportions";
    case ErrorCode::UnknownSnapshot: return "UnknownSnapshot";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Serialization: return "Serialization";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

StageError::StageError(std::string stage, ErrorCode code, const std::string& message)
    : Error(code, "stage '" + stage + "': " + message), stage_(std::move(stage)) {}

}  // namespace qs
