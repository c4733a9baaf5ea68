#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "hce/common/error.hpp"

namespace hce::tool {

/// Exit statuses: 0 success, 2 usage, 3 I/O, 4 data or validation,
/// 5 parse, 1 anything else.
int exit_code(ErrorCategory c);

/// Runs the `hce` command line; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hce::tool
