#ifndef LMC_CLI_APP_HPP
#define LMC_CLI_APP_HPP

#include <string>
#include <vector>

namespace lmc {

// Entry point behind the lmclab binary. Exit codes: 0 success, 1 usage
// error, 2 runtime failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace lmc

#endif
