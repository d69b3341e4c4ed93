#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pillarmamba {

/// Command-line entry point. The run report (JSON) goes to `out`; logs, usage text and
/// structured errors go to `err`. Returns 0 on success, 1 on runtime failure, 2 on usage errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Same, with args[0] as the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pillarmamba
