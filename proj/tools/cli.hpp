#ifndef UBALAB_TOOLS_CLI_HPP_
#define UBALAB_TOOLS_CLI_HPP_

#include <iosfwd>

namespace ubalab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the `ubalab` tool; results go to `out`, progress and
// errors to `err`.
int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ubalab::cli

#endif  // UBALAB_TOOLS_CLI_HPP_
