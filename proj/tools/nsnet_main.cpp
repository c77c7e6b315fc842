// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "nsnet/cli.hpp"

int main(int argc, char** argv) { return nsnet::run_cli(argc, argv, std::cout, std::cerr); }
