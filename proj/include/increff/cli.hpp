#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace increff {

/// Exit codes: 0 success, 2 input/configuration error, 3 estimation error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv);

} // namespace increff
