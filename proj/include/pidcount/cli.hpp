#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pidcount {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Entry point of the pidcount command line; argv[0] is the program name.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

/// Worker count: explicit value if > 0, else PIDCOUNT_THREADS, else 1.
int resolve_threads(int requested);

}  // namespace pidcount
