#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace softs {

enum class ErrorCode {
  dimension,
  non_finite,
  empty_channels,
  parse,
  format,
  data,
  config,
  corruption,
  io,
  divergence,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a stable machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace softs
