#include <iostream>
#include <string>
#include <vector>

#include "stdml/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return stdml::run_cli(args, std::cout, std::cerr);
}
