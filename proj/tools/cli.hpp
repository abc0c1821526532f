#pragma once

#include <iosfwd>

#include "settings.hpp"

namespace ckc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `ckc` tool; `out` receives reports, `err` diagnostics.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err, const EnvLookup& env = process_env());

}  // namespace ckc::cli
