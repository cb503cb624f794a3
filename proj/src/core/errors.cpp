#include "core/errors.hpp"

namespace ldst {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::argument: return "argument";
    case ErrorCode::dimension: return "dimension";
    case ErrorCode::decode: return "decode";
    case ErrorCode::io: return "io";
    case ErrorCode::checkpoint_format: return "checkpoint-format";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::backend_unavailable: return "backend-unavailable";
    case ErrorCode::dataset: return "dataset";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::internal: return "internal";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace ldst
