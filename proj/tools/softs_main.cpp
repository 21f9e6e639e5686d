#include <iostream>

#include "softs/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return softs::cli::run(args, std::cout, std::cerr);
}
