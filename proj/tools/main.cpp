#include <iostream>

#include "nmc/cli.hpp"

int main(int argc, char** argv) { return nmc::run_cli(argc, argv, std::cout, std::cerr); }
