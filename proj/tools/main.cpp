#include "mcdsim/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return mcdsim::cli::run(argc, argv, std::cout, std::cerr);
}
