#pragma once

#include <iosfwd>

namespace deshadow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `deshadow` executable. Failures print one line
/// `error: <class>: <message>` to `err` and return 1, or 2 for usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deshadow::cli
