#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ordikit {

enum class ErrorKind {
  validation,         // bad input data or configuration
  network,            // transport failure, retryable
  auth,               // rejected credentials, fatal
  malformed_payload,  // endpoint answered with something unusable, fatal
  internal,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::network: return "network";
    case ErrorKind::auth: return "auth";
    case ErrorKind::malformed_payload: return "malformed_payload";
    case ErrorKind::internal: return "internal";
  }
  return "internal";
}

/// Process exit code for an error category: 2 validation, 3 network, 4 internal.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 2;
    case ErrorKind::network:
    case ErrorKind::auth:
    case ErrorKind::malformed_payload: return 3;
    case ErrorKind::internal: return 4;
  }
  return 4;
}

/// The single exception type thrown by the library.
///
/// `code` is a stable snake_case identifier (e.g. "duplicate_id") meant for
/// machine-readable reports; `subjects` names the offending records when
/// there are any.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message,
        std::vector<std::string> subjects = {})
      : std::runtime_error(message),
        kind_(kind),
        code_(std::move(code)),
        subjects_(std::move(subjects)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }
  const std::vector<std::string>& subjects() const noexcept { return subjects_; }

 private:
  ErrorKind kind_;
  std::string code_;
  std::vector<std::string> subjects_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message,
                              std::vector<std::string> subjects = {}) {
  throw Error(ErrorKind::validation, std::move(code), message, std::move(subjects));
}

}  // namespace ordikit
