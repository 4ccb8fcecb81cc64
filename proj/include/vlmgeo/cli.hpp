#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vlmgeo {

// args excludes the program name. Returns the process exit code: 0 on
// success, 2 for usage or config errors, 1 for failures while running.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vlmgeo
