#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace genrestat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Runs one `genrestat` invocation. args[0] is the program name. Progress goes
// to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace genrestat::cli
