#pragma once

namespace supmer {

/// Entry point of the `supmer` command line tool.
/// Exit codes: 0 success, 1 runtime error, 2 usage error.
int cli_main(int argc, const char* const* argv);

}  // namespace supmer
