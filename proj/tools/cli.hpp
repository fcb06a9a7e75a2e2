#pragma once

#include <string>
#include <vector>

namespace moereid::cli {

// Entry point behind the binary; returns the process exit code.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace moereid::cli
