#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sosmas::cli {

/// Exit codes of `run`.
inline constexpr int kSuccess = 0;
inline constexpr int kError = 1;
/// Verification or synthesis found no certificate, or a schedule is not
/// jointly connected; the result file is still written.
inline constexpr int kNegative = 2;

/// Runs one subcommand. `args` excludes the program name. Help goes to
/// `out`, diagnostics to `err`; results go only to files.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace sosmas::cli
