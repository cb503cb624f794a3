#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ldst {

enum class ErrorCode {
  argument,
  dimension,
  decode,
  io,
  checkpoint_format,
  corrupt,
  backend_unavailable,
  dataset,
  divergence,
  internal,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Raised when a training step produces a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t iteration, const std::string& message)
      : Error(ErrorCode::divergence, message), iteration_(iteration) {}
  std::int64_t iteration() const { return iteration_; }

 private:
  std::int64_t iteration_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace ldst
