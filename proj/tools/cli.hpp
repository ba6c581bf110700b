#pragma once

#include <iosfwd>

namespace lfv::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingInput = 3,
  kProviderFailure = 4,
  kDivergence = 5,
};

/// Parses argv, runs one subcommand and maps errors to exit codes. Logs go
/// to `err`, results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lfv::cli
