#include <iostream>

#include "semtool/cli.hpp"

int main(int argc, char** argv) { return semtool::run_cli(argc, argv, std::cout, std::cerr); }
