#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vshuttle {

enum class ErrorCode {
  invalid_params,
  domain_error,
  unknown_node,
  no_minimum,
  not_a_minimum,
  unbounded,
  no_root,
  voltage_limit,
  unreachable_target,
  invalid_protocol,
  ion_lost,
  step_failure,
  missing_window,
  all_cells_failed,
  parse_error,
  validation_error,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; the code tells callers (and the CLI
// exit-status mapping) what went wrong.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool is_config_error() const noexcept {
    return code_ == ErrorCode::parse_error || code_ == ErrorCode::validation_error;
  }

 private:
  ErrorCode code_;
};

}  // namespace vshuttle
