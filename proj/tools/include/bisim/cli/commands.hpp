#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace bisim::cli {

/// Process exit codes. Stable; documented in docs/cli.md.
enum ExitCode : int {
  kExitOk = 0,
  kExitLoadError = 1,  // unreadable model, bad reference, evaluation failure
  kExitSmallGain = 2,
  kExitInvalidAlphas = 3,
  kExitViolation = 4,
  kExitUsage = 64,
};

/// Runs one command line (args[0] is the program name). Normal output goes
/// to `out`, diagnostics to `err`.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

/// Shortest decimal that reads back to the same double; integral values
/// keep a trailing ".0".
std::string format_real(double v);

/// 17 significant digits, as written to CSV files.
std::string format_csv_real(double v);

}  // namespace bisim::cli
