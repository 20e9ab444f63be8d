#include "dgan/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dgan::run_cli(argc, argv, std::cout, std::cerr); }
