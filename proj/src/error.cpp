#include "deshadow/error.hpp"

namespace deshadow {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config_error";
    case ErrorKind::Data: return "data_error";
    case ErrorKind::Shape: return "shape_error";
    case ErrorKind::Backbone: return "backbone_error";
    case ErrorKind::NonFinite: return "nonfinite_loss";
    case ErrorKind::Io: return "io_error";
    case ErrorKind::Usage: return "usage_error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace deshadow
