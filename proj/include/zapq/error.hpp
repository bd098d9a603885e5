#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace zapq {

enum class ErrorCode {
  NotHurwitz,
  Asymmetric,
  NonFinite,
  NotSPD,
  NotIrreducible,
  Diverged,
  NotCentered,
  NotLinearFamily,
  SingularAstar,
  EpsilonTooLarge,
  SingularJacobian,
  Blowup,
  EmptyInput,
  InvalidArgument,
  Config,
  Io,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotHurwitz: return "NotHurwitz";
    case ErrorCode::Asymmetric: return "Asymmetric";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NotSPD: return "NotSPD";
    case ErrorCode::NotIrreducible: return "NotIrreducible";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::NotCentered: return "NotCentered";
    case ErrorCode::NotLinearFamily: return "NotLinearFamily";
    case ErrorCode::SingularAstar: return "SingularAstar";
    case ErrorCode::EpsilonTooLarge: return "EpsilonTooLarge";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::Blowup: return "Blowup";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; the code identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace zapq
