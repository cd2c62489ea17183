#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace safepaint::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Parses and executes one subcommand. Usage problems print help text to
/// `err` and return kExitUsage; failures while running return kExitRuntime.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace safepaint::cli
