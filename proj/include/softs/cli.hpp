#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace softs::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs `softs <args...>` (args excludes the program name). Results go to
// `out`; progress and the one-line error report go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace softs::cli
