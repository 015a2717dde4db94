#include "avsf/error.hpp"

namespace avsf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::DuplicateClipId: return "DuplicateClipId";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::NoFaceInFirstFrame: return "NoFaceInFirstFrame";
    case ErrorCode::DecodeFailure: return "DecodeFailure";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::UnsupportedSampleRate: return "UnsupportedSampleRate";
    case ErrorCode::EmptyModality: return "EmptyModality";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::NonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::ShapeConflict: return "ShapeConflict";
    case ErrorCode::UnmappedParameter: return "UnmappedParameter";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::EmptyVideo: return "EmptyVideo";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::UnknownMode: return "UnknownMode";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::EmptyPredictionList: return "EmptyPredictionList";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::SingleClassLabels: return "SingleClassLabels";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace avsf
