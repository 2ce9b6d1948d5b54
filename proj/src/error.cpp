#include "nflab/error.hpp"

namespace nfl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kTruncatedFile: return "truncated file";
    case ErrorCode::kZeroMaxValue: return "zero max value";
    case ErrorCode::kIo: return "i/o failure";
    case ErrorCode::kCropTooLarge: return "crop larger than image";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kOutOfRange: return "value out of range";
    case ErrorCode::kNonPowerOfTwo: return "size is not a power of two";
    case ErrorCode::kNonSquare: return "image is not square";
    case ErrorCode::kNegativeIntensity: return "negative intensity";
    case ErrorCode::kZeroScale: return "zero scale";
    case ErrorCode::kDomainViolation: return "coordinate outside domain";
    case ErrorCode::kNotAffineOutput: return "architecture has no final affine layer";
    case ErrorCode::kDegenerateDirection: return "degenerate direction";
    case ErrorCode::kMissingCheckpoint: return "missing checkpoint";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kParse: return "parse error";
  }
  return "unknown error";
}

void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(to_string(code)) + ": " + what);
}

}  // namespace nfl
