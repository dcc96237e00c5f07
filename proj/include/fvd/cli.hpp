#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fvd::cli
{

/// Runs the `fvd` command line. `args` excludes the program name.
/// Returns 0 on success, 1 on invalid input or usage, 2 on runtime failure.
int dispatch(const std::vector<std::string> & args, std::ostream & out, std::ostream & err);

}  // namespace fvd::cli
