#ifndef KGE_CLI_COMMANDS_H_
#define KGE_CLI_COMMANDS_H_

#include <iosfwd>
#include <string>
#include <vector>

namespace kge::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;     // runtime error
inline constexpr int kUsage = 2;       // bad flags or values
inline constexpr int kNanMetric = 3;   // evaluation produced NaN

// Runs `kge <args...>`; args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kge::cli

#endif  // KGE_CLI_COMMANDS_H_
