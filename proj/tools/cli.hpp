#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slaq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `slaq` command line with `args` (program name excluded),
/// writing normal output to `out` and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slaq::cli
