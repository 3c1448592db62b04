#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ionramsey {

enum class ErrorKind {
  validation,           // rejected inputs; details() lists each offending field
  accuracy,             // a quadrature or iteration failed to reach its tolerance
  fit,                  // a fit converged to something unusable or not at all
  degenerate_contrast,  // fringe contrast too small to carry phase information
  truncation,           // state support ran past the Fock-space cutoff
  unsupported,          // valid request outside the implemented domain
  io,                   // file or format problems
  usage,                // malformed command-line or API call
};

const char* to_string(ErrorKind kind) noexcept;

// Field-level context entries, e.g. {"noise.spam_error", "must lie in [0, 0.5)"}.
using ErrorDetails = std::vector<std::pair<std::string, std::string>>;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, ErrorDetails details = {});

  ErrorKind kind() const noexcept { return kind_; }
  const ErrorDetails& details() const noexcept { return details_; }

  // what() carries the rendered kind/details block; this is the bare text.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
  ErrorDetails details_;
};

[[noreturn]] void throw_validation(const std::string& message, ErrorDetails details = {});

}  // namespace ionramsey
