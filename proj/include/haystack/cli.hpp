#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace haystack {

/// Parses `args` (without the program name) and runs the chosen subcommand.
/// Returns the process exit status: 0 on success, 2 for usage or
/// configuration errors, 1 for any other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace haystack
