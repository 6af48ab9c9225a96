#include <iostream>
#include <string>
#include <vector>

#include "lqrtune/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return lqrtune::run_cli(args, std::cout, std::cerr);
}
