#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace esl {

enum class ErrorKind {
  invalid_resolution,
  singular_distance,
  configuration,
  leakage,
  fit,
  domain,
  parse,
  numerical,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// CLI exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitCheckFailed = 4;

int exit_code_for(ErrorKind kind);

}  // namespace esl
