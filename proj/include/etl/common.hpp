#pragma once

#include <stdexcept>
#include <string>

namespace etl {

// Error categories surfaced by the CLI as `error[<category>]: <message>`.
enum class ErrorCategory {
  invalid_shape,
  io,
  format,
  config,
  training_diverged,
  pairing,
  split,
  evaluation,
  analysis,
  generation,
};

const char* to_string(ErrorCategory c);

class EtlError : public std::runtime_error {
 public:
  EtlError(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& message) {
  throw EtlError(c, message);
}

inline void require(bool ok, ErrorCategory c, const std::string& message) {
  if (!ok) fail(c, message);
}

}  // namespace etl
