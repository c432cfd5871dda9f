#pragma once

#include <iosfwd>

namespace hpx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Parses argv and runs one subcommand. Normal output goes to out, diagnostics
// and usage text to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hpx::cli
