#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nfl {

enum class ErrorCode {
  kUnsupportedFormat,
  kTruncatedFile,
  kZeroMaxValue,
  kIo,
  kCropTooLarge,
  kDimensionMismatch,
  kOutOfRange,
  kNonPowerOfTwo,
  kNonSquare,
  kNegativeIntensity,
  kZeroScale,
  kDomainViolation,
  kNotAffineOutput,
  kDegenerateDirection,
  kMissingCheckpoint,
  kInvalidArgument,
  kParse,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so
// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace nfl
