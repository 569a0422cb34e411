// Command-line front end. Kept out of main() so tests can drive it in-process.
#ifndef EPIKIT_TOOLS_CLI_HPP
#define EPIKIT_TOOLS_CLI_HPP

#include <ostream>

namespace epikit {

// Exit codes.
constexpr int kExitPass = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFail = 2;
constexpr int kExitUnverified = 3;

/// Parses argv, runs one subcommand, writes files under --out and a short
/// summary to `out`. Diagnostics and log lines go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace epikit

#endif  // EPIKIT_TOOLS_CLI_HPP
