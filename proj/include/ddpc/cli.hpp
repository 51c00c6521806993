// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ddpc {

/// Stable process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitMissingWeights = 2,
  kExitMalformedInput = 3,
  kExitMissingReference = 4,
  kExitCountMismatch = 5,
  kExitTooFewPoints = 6,
};

/// Runs one command. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ddpc
