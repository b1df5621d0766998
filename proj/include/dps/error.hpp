#pragma once

#include <stdexcept>
#include <string>

namespace dps {

enum class ErrorCode {
  kDimensionMismatch,
  kInvalidArgument,
  kBadMagic,
  kVersionMismatch,
  kShapeMismatch,
  kTruncated,
  kIo,
  kParse,
  kOutOfRange,
  kDegenerateInput,
};

const char* to_string(ErrorCode code);

// All library failures are reported through this type; `code()` lets callers
// (the CLI in particular) map failures onto exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dps
