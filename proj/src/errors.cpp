#include "esl/errors.hpp"

namespace esl {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_resolution: return "invalid_resolution";
    case ErrorKind::singular_distance: return "singular_distance";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::leakage: return "leakage";
    case ErrorKind::fit: return "fit";
    case ErrorKind::domain: return "domain";
    case ErrorKind::parse: return "parse";
    case ErrorKind::numerical: return "numerical";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::singular_distance:
    case ErrorKind::fit:
    case ErrorKind::numerical:
      return kExitNumerical;
    default:
      return kExitConfig;
  }
}

}  // namespace esl
