#include <iostream>
#include <string>
#include <vector>

#include "lail/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return lail::run_command(args, std::cout, std::cerr);
}
