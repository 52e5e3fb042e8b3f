#pragma once

#include <iosfwd>

namespace copaint::service {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `copaint` tool. Subcommands: plan, render,
/// dataset generate, metrics gap, session export, serve.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace copaint::service
