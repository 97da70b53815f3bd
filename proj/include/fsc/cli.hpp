#pragma once

namespace fsc {

/// Entry point behind main(): parses argv, dispatches the subcommand,
/// maps failures to exit codes (0 ok, 2 input, 3 config, 4 numeric).
int cli_main(int argc, const char* const* argv);

}  // namespace fsc
