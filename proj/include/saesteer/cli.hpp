#pragma once

#include <ostream>

namespace saesteer {

// Subcommands: train, build-bank, emit-delta, metrics, prompts, inspect.
// Returns 0 on success, 1 on validation errors (including bad usage) and 2
// on I/O or file-format errors.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, const char* const* argv);

}  // namespace saesteer
