#pragma once

#include <iosfwd>

#include "ocpfem/config.hpp"

namespace ocpfem {

/// Exit codes of the command-line front end.
enum ExitCode : int { exit_ok = 0, exit_solver_failure = 1, exit_config_error = 2 };

/// Executes a validated configuration. Tables and summaries go to the
/// configured paths, or to `out` when a path is empty; diagnostics go to
/// `err`. Returns an ExitCode.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses `ocpfem <command> [--key value ...] [--config file]` and runs it.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ocpfem
