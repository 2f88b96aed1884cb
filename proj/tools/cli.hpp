#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace temi::cli {

/// Runs one `temi` invocation. Returns the process exit code:
/// 0 success, 1 I/O, 2 validation, 3 argument, 4 numeric, 5 internal.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

} // namespace temi::cli
