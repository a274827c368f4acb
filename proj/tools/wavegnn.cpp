#include <iostream>

#include "wavegnn/cli.hpp"

int main(int argc, char** argv) {
  return wavegnn::run_cli(argc, argv, std::cout, std::cerr);
}
