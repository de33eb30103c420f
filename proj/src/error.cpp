#include "floeseg/error.hpp"

namespace floeseg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::WrongChannelCount: return "WrongChannelCount";
    case ErrorCode::BadRange: return "BadRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::BadKernel: return "BadKernel";
    case ErrorCode::InvalidProfile: return "InvalidProfile";
    case ErrorCode::OffPaletteColor: return "OffPaletteColor";
    case ErrorCode::SceneTooSmall: return "SceneTooSmall";
    case ErrorCode::EmptyManifest: return "EmptyManifest";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::OddDimensions: return "OddDimensions";
    case ErrorCode::BadRate: return "BadRate";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::BadDimensions: return "BadDimensions";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::MissingPair: return "MissingPair";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::EmptySceneDir: return "EmptySceneDir";
    case ErrorCode::UnknownScene: return "UnknownScene";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace floeseg
