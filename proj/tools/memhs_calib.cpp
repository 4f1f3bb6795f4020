#include <iostream>

#include "memhs/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return memhs::run_cli(args, std::cout, std::cerr);
}
