#pragma once

#include <string>
#include <vector>

namespace floeseg {

/// Entry point of the `floeseg` tool. Returns 0 on success, 1 on a runtime
/// error and 2 on a usage error; messages go to standard error.
int run_cli(int argc, const char* const* argv);
/// Same, with argv[0] omitted.
int run_cli(const std::vector<std::string>& args);

}  // namespace floeseg
