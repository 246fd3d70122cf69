#pragma once

#include <string>
#include <vector>

#include "crffuse/types.hpp"

namespace crffuse::cli {

// Runs one subcommand (synth | fuse | train | eval | gradcheck | bench-filter)
// and returns the process exit status. `args` excludes the program name.
// The CRFFUSE_SEED environment variable overrides --seed when set.
int run(const std::vector<std::string>& args);

}  // namespace crffuse::cli
