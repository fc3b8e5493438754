#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace acg {

enum class ErrorCode {
  NotPositiveDefinite,
  DimensionMismatch,
  IndexOutOfRange,
  InvalidRange,
  StepOutOfRange,
  MissingUnconditional,
  BadWeights,
  UnknownPreset,
  NoExactDensity,
  InconsistentBMarginal,
  TooFewSamples,
  SizeCap,
  OutOfBounds,
  UnreconstructablePatch,
  ShapeMismatch,
  ConfigInvalid,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries one of the codes above so that
// callers (and tests) can branch on the kind of failure, not the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace acg
