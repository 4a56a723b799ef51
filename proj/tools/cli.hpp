#pragma once

#include <exception>
#include <ostream>

namespace ge::cli {

enum ExitCode { ok = 0, failure = 1, usage = 2, config = 3, numeric = 4 };

// Maps toolkit exceptions to exit codes.
int exit_code_for(const std::exception& e);

// Entry point of the `ge` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ge::cli
