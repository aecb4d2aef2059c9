#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace headmotion::cli {

/// Runs the command line tool on `args` (without the program name) and returns the exit code:
/// 0 success, 1 runtime failure, 2 usage or parse error, 3 domain error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace headmotion::cli
