#pragma once

// Command-line front end: gen, train, eval, activate, sweep, ablate.
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

#include <iosfwd>
#include <string>
#include <vector>

namespace fcnet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line. `args` excludes the program name. Machine-readable
/// results go to `out`, diagnostics and log lines to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fcnet
