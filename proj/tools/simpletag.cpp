#include <iostream>
#include <string>
#include <vector>

#include "simpletag/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return simpletag::run_cli(args, std::cout, std::cerr);
}
