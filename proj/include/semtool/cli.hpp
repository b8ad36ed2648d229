#pragma once

#include <ostream>

namespace semtool {

// Exit codes returned by run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitValidation = 3;

// Entry point of the `semtool` command: index, search, eval, inspect, serve.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace semtool
