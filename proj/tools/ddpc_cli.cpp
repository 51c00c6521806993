// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "ddpc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ddpc::run_cli(args, std::cout, std::cerr);
}
