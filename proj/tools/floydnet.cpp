#include <iostream>
#include <string>
#include <vector>

#include "floydnet/cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return floydnet::cli::run(args, std::cout, std::cerr);
}
