#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kanlab {

/// Runs one command line (args[0] is the program name). Returns 0 on success,
/// 1 on a runtime failure and 2 on a usage error; diagnostics go to `err`.
int parse_and_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int parse_and_dispatch(int argc, const char* const* argv);

}  // namespace kanlab
