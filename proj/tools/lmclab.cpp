#include <vector>

#include "lmc/cli_app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lmc::run_cli(args);
}
