#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mlh {

// Library-wide error with a stable machine-readable code. The CLI prints
// "MLH-ERROR <code>: <message>" and exits 1; tests match on the code.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

inline void check(bool condition, const char* code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace mlh
