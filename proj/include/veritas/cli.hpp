#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace veritas::cli {

inline constexpr unsigned long long kDefaultSeed = 0;

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 2 on a usage error and 1 on a runtime error; errors are reported
/// on `err` as a single JSON line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace veritas::cli
