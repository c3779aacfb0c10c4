#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace trulr::cli {

// args excludes the program name. Returns 0 on success, 1 on usage or
// configuration errors, 2 on runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Help text of the top-level app (subcommand empty) or of one subcommand.
std::string help_text(const std::string& subcommand = "");

}  // namespace trulr::cli
