#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  return ubalab::cli::RunCli(argc, argv, std::cout, std::cerr);
}
