#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace toxspan {
namespace cli {

// Dispatches the toxspan subcommands. `args` excludes the program name.
// Returns 0 on success, 2 on usage errors (unknown subcommand or flag), and
// 1 on file or data errors; diagnostics go to `err`, reports to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cli
}  // namespace toxspan
