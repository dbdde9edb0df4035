#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "aberr/error.hpp"
#include "aberr/regressor.hpp"

namespace aberr::cli {

/// Process exit codes. Stable contract for scripting.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitNumerical = 4,
};

int exit_code_for(ErrorKind kind);

/// Runs one subcommand. `args` excludes the program name; "gen-lenses --count 3 ..."
/// is {"gen-lenses", "--count", "3", ...}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Loss-variant tag whose weights equal `w` exactly, or "custom".
std::string variant_tag(const LossWeights& w);

/// Human-readable label for a loss-variant tag, following the ablation table.
std::string variant_label(const std::string& tag);

}  // namespace aberr::cli
