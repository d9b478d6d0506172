#include <iostream>

#include "lrkb/cli.hpp"

int main(int argc, char** argv) { return lrkb::run_cli(argc, argv, std::cout, std::cerr); }
