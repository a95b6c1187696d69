#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace collective::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitSimulation = 3;
inline constexpr int kExitLearning = 4;

/// Parses and runs one subcommand (simulate, learn, learn-gp,
/// learn-features, eval, sweep). Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

}  // namespace collective::cli
