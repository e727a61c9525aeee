#pragma once

#include <stdexcept>
#include <string>

namespace wormhole {

enum class ErrorCode {
  InvalidArgument,
  FormMismatch,
  GridMismatch,
  IntegrationFailure,
  BracketFailure,
  TailTooShort,
  RejectedStep,
  Blowup,
  DomainError,
  DomainTooSmall,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::FormMismatch: return "form-mismatch";
    case ErrorCode::GridMismatch: return "grid-mismatch";
    case ErrorCode::IntegrationFailure: return "integration-failure";
    case ErrorCode::BracketFailure: return "bracket-failure";
    case ErrorCode::TailTooShort: return "tail-too-short";
    case ErrorCode::RejectedStep: return "rejected-step";
    case ErrorCode::Blowup: return "blowup";
    case ErrorCode::DomainError: return "domain-error";
    case ErrorCode::DomainTooSmall: return "domain-too-small";
    case ErrorCode::Io: return "io-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the codes above.
/// Validation-type codes map to CLI exit status 2, numerical ones to 3.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_validation() const noexcept {
    return code_ == ErrorCode::InvalidArgument || code_ == ErrorCode::FormMismatch ||
           code_ == ErrorCode::GridMismatch || code_ == ErrorCode::DomainError ||
           code_ == ErrorCode::Io;
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace wormhole
