#include <string>
#include <vector>

#include "crffuse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return crffuse::cli::run(args);
}
