#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flowguard::cli {

enum ExitCode : int { kSuccess = 0, kUsageError = 1, kDataError = 2, kInternalError = 3 };

/// Runs one command line (without the program name) and returns its exit
/// code. Reports go to `out`, diagnostics and progress to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowguard::cli
