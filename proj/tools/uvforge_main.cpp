#include <iostream>
#include <string>
#include <vector>

#include "uvforge/cli.hpp"

int main(int argc, char** argv) {
  return uvforge::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
