#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace radiart {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitValidation = 2,
    kExitDivergence = 3,
    kExitBridge = 4,
    kExitIo = 5,
};

/// Runs `radiart <args...>` (args excludes the program name) and returns the
/// process exit code. Messages go to `out` and `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace radiart
