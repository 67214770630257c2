#include <iostream>

#include "survsurrogate/cli.hpp"

int main(int argc, char** argv) {
  return survsurrogate::run_cli(argc, argv, std::cout, std::cerr);
}
