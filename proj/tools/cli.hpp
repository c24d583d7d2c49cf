#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pgr2m::cli {

// Runs one command; returns the process exit code. Diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pgr2m::cli
