#ifndef MUFM_ERROR_HPP
#define MUFM_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace mufm {

enum class ErrorCode {
  UnsupportedFormat,
  CorruptStream,
  NotColor,
  InvalidArgument,
  ZeroVector,
  DimensionMismatch,
  MixedDimensions,
  NotNormalized,
  EmptyGallery,
  EmptyScores,
  DuplicateId,
  ModelLoadFailure,
  ShapeMismatch,
  InferenceFailure,
  ParseError,
  IoError,
  TooFewSubjects,
  UnknownProbe,
  NonConsecutiveEpochs,
  MaskRoleViolation,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptStream: return "CorruptStream";
    case ErrorCode::NotColor: return "NotColor";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::MixedDimensions: return "MixedDimensions";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::EmptyGallery: return "EmptyGallery";
    case ErrorCode::EmptyScores: return "EmptyScores";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::ModelLoadFailure: return "ModelLoadFailure";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InferenceFailure: return "InferenceFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::TooFewSubjects: return "TooFewSubjects";
    case ErrorCode::UnknownProbe: return "UnknownProbe";
    case ErrorCode::NonConsecutiveEpochs: return "NonConsecutiveEpochs";
    case ErrorCode::MaskRoleViolation: return "MaskRoleViolation";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI exit codes, HTTP statuses) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mufm

#endif  // MUFM_ERROR_HPP
