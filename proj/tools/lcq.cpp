#include "lcq/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return lcq::run_cli(argc, argv, std::cout, std::cerr); }
