#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sdeadapt::cli {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kValidationError = 2,
  kAllPathsDiverged = 3,
};

/// Entry point of the sdeadapt tool. args[0] is the program name.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace sdeadapt::cli
