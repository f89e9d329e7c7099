#include <iostream>
#include <string>
#include <vector>

#include "bisim/cli/commands.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return bisim::cli::run(args, std::cout, std::cerr);
}
