#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace floeseg {

enum class ErrorCode {
  FileNotFound,
  UnsupportedFormat,
  IoError,
  WrongChannelCount,
  BadRange,
  DimensionMismatch,
  BadKernel,
  InvalidProfile,
  OffPaletteColor,
  SceneTooSmall,
  EmptyManifest,
  MissingFile,
  ShapeMismatch,
  OddDimensions,
  BadRate,
  BadConfig,
  EmptyTrainSet,
  NonFiniteLoss,
  BadDimensions,
  CorruptModel,
  MissingPair,
  PortInUse,
  EmptySceneDir,
  UnknownScene,
  ParseError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace floeseg
