#include <iostream>

#include "rcl/cli.hpp"

int main(int argc, char** argv) { return rcl::run_cli(argc, argv, std::cout, std::cerr); }
