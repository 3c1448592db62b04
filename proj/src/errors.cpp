#include "ionramsey/errors.hpp"

namespace ionramsey {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::accuracy: return "accuracy";
    case ErrorKind::fit: return "fit";
    case ErrorKind::degenerate_contrast: return "degenerate_contrast";
    case ErrorKind::truncation: return "truncation";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

namespace {

std::string render(ErrorKind kind, const std::string& message, const ErrorDetails& details) {
  std::string text = std::string(to_string(kind)) + ": " + message;
  for (const auto& [field, reason] : details) {
    text += "\n  " + field + ": " + reason;
  }
  return text;
}

}  // namespace

Error::Error(ErrorKind kind, const std::string& message, ErrorDetails details)
    : std::runtime_error(render(kind, message, details)),
      kind_(kind),
      message_(message),
      details_(std::move(details)) {}

void throw_validation(const std::string& message, ErrorDetails details) {
  throw Error(ErrorKind::validation, message, std::move(details));
}

}  // namespace ionramsey
