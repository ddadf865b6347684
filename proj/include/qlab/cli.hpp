#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qlab {

/// Exit codes: 0 pass, 1 check failed or run error, 2 unparsable input.
enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitParse = 2 };

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "QLAB_OUT_DIR";

/// Full command-line front end; argv[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qlab
