#pragma once

#include <string>
#include <vector>

namespace ebca::cli {

// Full CLI entry point; args exclude the program name. Exposed as a library
// call so tests can drive subcommands in-process.
// Exit codes: 0 success, 1 check failure, 2 config error.
int run_cli(const std::vector<std::string>& args);

}  // namespace ebca::cli
