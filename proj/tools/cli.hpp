#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace setrank::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kBadInput = 3,
  kUnsupported = 4,
};

/// Runs one command line. `args` excludes the program name. Everything the
/// command prints goes to `out`; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace setrank::cli
