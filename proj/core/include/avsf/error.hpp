#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avsf {

enum class ErrorCode {
  // ingest
  MissingField,
  DuplicateClipId,
  UnknownLabel,
  InvalidRecord,
  NoFaceInFirstFrame,
  DecodeFailure,
  EmptyAudio,
  UnsupportedSampleRate,
  EmptyModality,
  // models
  ShapeMismatch,
  KindMismatch,
  NonFiniteActivation,
  ShapeConflict,
  UnmappedParameter,
  MissingTensor,
  EmptySequence,
  EmptyVideo,
  // training
  LengthMismatch,
  EmptyBatch,
  UnknownMode,
  SingleClassDataset,
  DivergenceDetected,
  EmptySplit,
  TooFewSubjects,
  // evaluation
  EmptyPredictionList,
  EmptyEvaluation,
  SingleClassLabels,
  UnknownKind,
  // plumbing
  InvalidConfig,
  IoError,
  FormatError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace avsf
