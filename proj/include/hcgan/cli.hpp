#pragma once

// Command-line entry point: ingest, train, simulate, backtest, report.
// Exit codes: 0 success, 2 validation failure, 3 numeric fault.

#include <iosfwd>
#include <string>
#include <vector>

namespace hcgan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hcgan::cli
