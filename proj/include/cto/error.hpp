#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cto {

/// Coarse failure classes. The CLI maps each one to its own exit code.
enum class ErrorCategory {
  invalid_argument,
  config,
  singular,
  infeasible,
  io,
};

std::string_view to_string(ErrorCategory category);
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory category, const std::string& message) {
  throw Error(category, message);
}

inline void require(bool condition, const std::string& message) {
  if (!condition) fail(ErrorCategory::invalid_argument, message);
}

}  // namespace cto
