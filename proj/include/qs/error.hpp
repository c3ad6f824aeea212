#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qs {

enum class ErrorCode {
  // ingest
  MissingColumn,
  RowInvariantViolation,
  EncodingError,
  TimestampParseError,
  // preprocess / features
  EmptyStream,
  ScoreOutOfRange,
  MissingDayRecord,
  TooFewSamples,
  // models
  SingleClassTrainingSet,
  NonFiniteFeature,
  UnfittedModel,
  EmptyGrid,
  InvalidHyperparameter,
  // eval
  LengthMismatch,
  EmptyInput,
  SingleClassInput,
  // explain / risk
  TooManyFeatures,
  EmptyBackground,
  BudgetTooSmall,
  MissingAttribution,
  // intervene
  CatalogMissing,
  UnknownPlan,
  InvalidTransition,
  // synth / service
  InvalidProportions,
  UnknownSnapshot,
  InvalidConfig,
  Io,
  Serialization,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by the pipeline orchestrator; carries the name of the failing stage.
class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode code, const std::string& message);

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace qs
