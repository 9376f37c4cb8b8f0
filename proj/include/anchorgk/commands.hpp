#pragma once

// Command-line front end: synth, fit, predict, evaluate, bench.

#include <iosfwd>

namespace anchorgk::cli {

enum ExitCode : int {
  kSuccess = 0,
  kRuntimeFailure = 1,
  kUsageError = 2,
};

/// Runs one command line. Never throws; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace anchorgk::cli
