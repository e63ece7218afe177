#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fafed {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitDiverged = 2;

/// Entry point of the `fafed` tool. args excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace fafed
