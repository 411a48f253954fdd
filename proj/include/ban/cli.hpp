#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ban::cli {

// Entry point of the `ban` command. Returns the process exit status:
// 0 success, 2 usage error, 1 any other failure (one-line cause on `err`).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ban::cli
