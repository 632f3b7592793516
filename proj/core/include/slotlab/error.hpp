#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slotlab {

// Coarse failure categories. The CLI prints the category name verbatim so
// scripts can dispatch on it.
enum class ErrorCategory {
  kDimension,
  kContract,
  kNumeric,
  kCapacity,
  kCatalog,
  kSimulation,
  kInfeasible,
  kIo,
  kFormat,
  kConfig,
  kUnsupported,
};

std::string_view CategoryName(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] void Fail(ErrorCategory category, const std::string& message);

inline void Require(bool condition, ErrorCategory category, const char* message) {
  if (!condition) Fail(category, message);
}

}  // namespace slotlab
