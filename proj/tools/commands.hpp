#pragma once

namespace rafa::cli {

/// Parses the command line, dispatches to a subcommand and maps errors to
/// exit codes (see ExitCode).
int run(int argc, char** argv);

}  // namespace rafa::cli
