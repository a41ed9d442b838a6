#pragma once

#include <string>
#include <vector>

namespace fast::cli {

// Entry point for the command-line tool; args excludes the program name.
// Returns 0 on success, 1 on runtime failure, 2 on usage errors.
int run(const std::vector<std::string>& args);

}  // namespace fast::cli
