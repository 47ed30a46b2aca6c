#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ilmfuse::cli {

/// Stable exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,    // bad flags, invalid fusion config, id mismatches
  kIo = 3,       // unreadable/unwritable/malformed files
  kNumeric = 4,  // NaN/Inf during scoring
};

/// Runs `ilmfuse <subcommand> ...`. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ilmfuse::cli
