#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ucoassoc {

/// Category of a failure. The CLI prints the class name so scripts can match on it.
enum class ErrorKind {
  kConfig,
  kInput,
  kSolver,
  kShape,
  kState,
  kDivergence,
  kSamplingExhausted,
  kDomain,
  kFormat,
  kIo,
};

std::string_view error_class_name(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace ucoassoc
