#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dvhn {

/// Exit statuses of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Runs one `dvhn` command. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Thread cap for scans and full-set forward passes: hardware concurrency,
/// lowered by the DVHN_THREADS environment variable when it is set.
int scan_threads();

}  // namespace dvhn
