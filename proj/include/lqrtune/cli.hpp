#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lqrtune {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kAborted = 1;
inline constexpr int kUsage = 2;
}  // namespace exit_code

/// Entry point behind the `lqr_autotune` binary: `tune`, `validate` and
/// `simulate` subcommands. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lqrtune
