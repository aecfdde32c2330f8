#pragma once

#include <iosfwd>

namespace nmc {

enum ExitCode : int {
    kExitOk = 0,
    kExitInput = 2,
    kExitNonconvergence = 3,
    kExitStatistical = 4,
};

/// Entry point for the command-line tool. Tables go to `out`; diagnostics
/// and the effective-config JSON line go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nmc
