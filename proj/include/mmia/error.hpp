#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmia {

// Stable machine-readable error codes. The string forms are part of the
// HTTP problem-detail contract and must not change.
enum class ErrorCode {
  backend_error,
  protocol_error,
  configuration_error,
  precondition_violation,
  template_error,
  parse_error,
  evaluation_error,
  state_error,
  index_error,
  ledger_error,
  validation_error,
  audit_error,
  budget_exhausted,
  incomplete_input,
  startup_error,
  io_error,
  not_found,
};

std::string_view to_string(ErrorCode code);
ErrorCode error_code_from_string(std::string_view text);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised by backends for failures worth retrying (connection reset,
// timeouts, 5xx). The gateway converts exhausted retries to backend_error.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message)
      : Error(ErrorCode::backend_error, message) {}
};

// Rule-language syntax error with a 1-based source location.
class ParseError : public Error {
 public:
  ParseError(int line, int column, std::string expected, const std::string& message)
      : Error(ErrorCode::parse_error, message),
        line_(line),
        column_(column),
        expected_(std::move(expected)) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }
  const std::string& expected() const noexcept { return expected_; }

 private:
  int line_;
  int column_;
  std::string expected_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    fail(ErrorCode::precondition_violation, message);
  }
}

}  // namespace mmia
