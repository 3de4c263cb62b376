#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace deshadow {

/// Failure classes reported by the library. The CLI prints the class name
/// verbatim so scripts can match on it.
enum class ErrorKind {
  Config,
  Data,
  Shape,
  Backbone,
  NonFinite,
  Io,
  Usage,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace deshadow
