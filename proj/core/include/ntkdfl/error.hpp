#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ntkdfl {

enum class ErrorCode {
  DimensionMismatch,
  InvalidArgument,
  BadMagic,
  TruncatedPayload,
  EmptyClass,
  InfeasibleDegree,
  EmptyInput,
  MissingEvaluation,
  Numerical,
  Config,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. The code lets callers branch on the
/// kind without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace ntkdfl
