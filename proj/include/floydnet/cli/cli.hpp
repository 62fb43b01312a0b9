#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace floydnet::cli {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Parses argv (argv[0] is the program name) and runs one subcommand.
// Returns 0 on success, 1 when a check fails, 2 on a usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace floydnet::cli
