#ifndef AUTOPOOL_ERROR_HPP
#define AUTOPOOL_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace autopool {

enum class ErrorCode {
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedFile,
  kTrailingBytes,
  kValueOutOfRange,
  kIoFailure,
  kInvalidConfig,
  kMissingFiles,
  kRecordSizeMismatch,
  kLabelOutOfRange,
  kInsufficientClassCount,
  kEmptyInput,
  kEmptyPairs,
  kEmptySet,
  kDivergedLoss,
  kDimensionMismatch,
  kNegativeInput,
  kGridLargerThanMap,
  kBadThreshold,
  kTooFewPairs,
  kUndefined,
  kSingleClass,
  kModelParse,
  kConfigParse,
};

constexpr std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kTrailingBytes: return "TrailingBytes";
    case ErrorCode::kValueOutOfRange: return "ValueOutOfRange";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kMissingFiles: return "MissingFiles";
    case ErrorCode::kRecordSizeMismatch: return "RecordSizeMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kInsufficientClassCount: return "InsufficientClassCount";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kEmptyPairs: return "EmptyPairs";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNegativeInput: return "NegativeInput";
    case ErrorCode::kGridLargerThanMap: return "GridLargerThanMap";
    case ErrorCode::kBadThreshold: return "BadThreshold";
    case ErrorCode::kTooFewPairs: return "TooFewPairs";
    case ErrorCode::kUndefined: return "Undefined";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kModelParse: return "ModelParse";
    case ErrorCode::kConfigParse: return "ConfigParse";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this type; `code()`
/// identifies the failure class and `what()` carries the detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view name() const noexcept { return error_name(code_); }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& detail) {
  if (!cond) throw Error(code, detail);
}

}  // namespace autopool

#endif  // AUTOPOOL_ERROR_HPP
