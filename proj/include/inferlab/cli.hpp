#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace inferlab::cli {

// Parses and executes one command-line invocation (argv without the program
// name). Messages go to `out`/`err`. Returns the process exit code:
// 0 success, 2 validation or parse error, 3 I/O error, 4 numeric error.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace inferlab::cli
