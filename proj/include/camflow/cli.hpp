#pragma once

#include <span>
#include <string>

namespace camflow::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,      // bad flags, unknown config keys, nothing to do
  kData = 2,       // unreadable / malformed / mismatched inputs
  kNumerical = 3,  // degeneracy, rank deficiency, any other failure
};

/// Runs one subcommand. args[0] is the program name. Diagnostics go to
/// stderr; each successful run writes run_manifest.json beside its outputs.
int dispatch(std::span<const std::string> args);
int dispatch(int argc, const char* const* argv);

}  // namespace camflow::cli
