#include <iostream>
#include <string>
#include <vector>

#include "vbnn/cli.hpp"

int main(int argc, char** argv) {
  return vbnn::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
