#pragma once

#include <ostream>

namespace mcdsim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInfeasible = 3;

/// Entry point of the `mcdsim` tool. Subcommands: infer, sample-lfsr,
/// perf-table, metrics, dse, quantize.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mcdsim::cli
