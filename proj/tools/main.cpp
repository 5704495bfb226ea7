#include "ftip/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return ftip::cli::run_cli(argc, argv, std::cout, std::cerr);
}
