#include "dps/error.hpp"

namespace dps {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kBadMagic: return "bad magic";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kTruncated: return "truncated file";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kOutOfRange: return "out of range";
    case ErrorCode::kDegenerateInput: return "degenerate input";
  }
  return "unknown";
}

}  // namespace dps
