#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace amefu::cli {

// Entry point shared by the binary and the tests. Returns the process exit
// code: 0 success, 1 check/assertion failure, 2 usage error, 3 I/O or
// format error.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

} // namespace amefu::cli
