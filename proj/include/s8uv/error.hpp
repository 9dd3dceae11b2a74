#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace s8uv {

enum class ErrorCode {
  // numerics
  AccumulatorOverflow,
  IterationCountTooSmall,
  InvalidFormat,
  // quant
  EmptyTensor,
  InvalidScale,
  InvalidClipRange,
  CodeOutOfRange,
  InvalidAlpha,
  InvalidBitWidth,
  PolicyBudgetExceedsLayerCount,
  // nn
  ShapeMismatch,
  LengthTooShort,
  InvalidChain,
  BadMagic,
  UnsupportedVersion,
  ChecksumMismatch,
  TruncatedFile,
  // prune
  TargetUnachievable,
  NoFlattenLayer,
  // sim
  UnsupportedRegime,
  TooFewLayers,
  InvalidProfile,
  InvalidClock,
  NegativeCoefficient,
  // dsp
  AudioTooShort,
  SegmentTooShort,
  SilentSignal,
  SampleRateMismatch,
  UnsupportedAudio,
  // app
  EmptyMatrix,
  ParseError,
  IoError,
  InvariantViolation,
};

constexpr std::string_view to_string(ErrorCode c) noexcept {
  switch (c) {
    case ErrorCode::AccumulatorOverflow: return "AccumulatorOverflow";
    case ErrorCode::IterationCountTooSmall: return "IterationCountTooSmall";
    case ErrorCode::InvalidFormat: return "InvalidFormat";
    case ErrorCode::EmptyTensor: return "EmptyTensor";
    case ErrorCode::InvalidScale: return "InvalidScale";
    case ErrorCode::InvalidClipRange: return "InvalidClipRange";
    case ErrorCode::CodeOutOfRange: return "CodeOutOfRange";
    case ErrorCode::InvalidAlpha: return "InvalidAlpha";
    case ErrorCode::InvalidBitWidth: return "InvalidBitWidth";
    case ErrorCode::PolicyBudgetExceedsLayerCount: return "PolicyBudgetExceedsLayerCount";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LengthTooShort: return "LengthTooShort";
    case ErrorCode::InvalidChain: return "InvalidChain";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::TargetUnachievable: return "TargetUnachievable";
    case ErrorCode::NoFlattenLayer: return "NoFlattenLayer";
    case ErrorCode::UnsupportedRegime: return "UnsupportedRegime";
    case ErrorCode::TooFewLayers: return "TooFewLayers";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::InvalidClock: return "InvalidClock";
    case ErrorCode::NegativeCoefficient: return "NegativeCoefficient";
    case ErrorCode::AudioTooShort: return "AudioTooShort";
    case ErrorCode::SegmentTooShort: return "SegmentTooShort";
    case ErrorCode::SilentSignal: return "SilentSignal";
    case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::UnsupportedAudio: return "UnsupportedAudio";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on the kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code), detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace s8uv
