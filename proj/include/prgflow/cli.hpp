#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace prgflow {

// Exit codes: 0 success, 1 usage error, 2 data or config error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace prgflow
