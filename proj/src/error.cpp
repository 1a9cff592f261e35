#include "mmia/error.hpp"

#include <array>
#include <utility>

namespace mmia {

namespace {

constexpr std::array<std::pair<ErrorCode, std::string_view>, 17> kNames{{
    {ErrorCode::backend_error, "backend-error"},
    {ErrorCode::protocol_error, "protocol-error"},
    {ErrorCode::configuration_error, "configuration-error"},
    {ErrorCode::precondition_violation, "precondition-violation"},
    {ErrorCode::template_error, "template-error"},
    {ErrorCode::parse_error, "parse-error"},
    {ErrorCode::evaluation_error, "evaluation-error"},
    {ErrorCode::state_error, "state-error"},
    {ErrorCode::index_error, "index-error"},
    {ErrorCode::ledger_error, "ledger-error"},
    {ErrorCode::validation_error, "validation-error"},
    {ErrorCode::audit_error, "audit-error"},
    {ErrorCode::budget_exhausted, "budget-exhausted"},
    {ErrorCode::incomplete_input, "incomplete-input"},
    {ErrorCode::startup_error, "startup-error"},
    {ErrorCode::io_error, "io-error"},
    {ErrorCode::not_found, "not-found"},
}};

}  // namespace

std::string_view to_string(ErrorCode code) {
  for (const auto& [value, name] : kNames) {
    if (value == code) {
      return name;
    }
  }
  return "unknown-error";
}

ErrorCode error_code_from_string(std::string_view text) {
  for (const auto& [value, name] : kNames) {
    if (name == text) {
      return value;
    }
  }
  throw Error(ErrorCode::validation_error, "unknown error code '" + std::string(text) + "'");
}

}  // namespace mmia
