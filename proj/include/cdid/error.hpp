#pragma once

#include <stdexcept>
#include <string>

namespace cdid {

enum class ErrorCode {
  NonSquare,
  NonBinaryEntry,
  TimeOrderViolation,
  DimensionMismatch,
  ArityOutOfRange,
  IndexOutOfRange,
  InvalidArgument,
  CapacityExceeded,
  IoError,
  SchemaError,
  ShapeMismatch,
  MissingHead,
  NonFiniteLoss,
  SingleClass,
  MissingAnswer,
  AmbiguousAnswer,
  DegenerateDialogue,
  OracleFailure,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace cdid
