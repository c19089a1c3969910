#pragma once

#include <iosfwd>

namespace calibrex::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs `calibrex <subcommand> [flags]`, writing results to out and
/// diagnostics to err. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace calibrex::cli
