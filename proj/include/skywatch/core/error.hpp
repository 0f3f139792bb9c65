#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skywatch {

enum class ErrorCode {
  invalid_argument,
  shape,
  io,
  format,
  numeric,
  sampling,
  degenerate_input,
  insufficient_data,
  not_found,
  conflict,
  invalid_verdict,
};

inline std::string_view to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape: return "shape";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::numeric: return "numeric";
    case ErrorCode::sampling: return "sampling";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::invalid_verdict: return "invalid_verdict";
  }
  return "unknown";
}

// Every failure raised by the library carries one of the codes above so the
// CLI and the HTTP layer can map it to exit statuses / response codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code)
  {
  }

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message)
{
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message)
{
  if (!condition)
    fail(code, message);
}

}  // namespace skywatch
