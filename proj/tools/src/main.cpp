#include <string>
#include <vector>

#include "ebca_cli/commands.hpp"

int main(int argc, char** argv) {
  return ebca::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
