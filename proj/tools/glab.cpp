#include <iostream>

#include "glab/cli.hpp"

int main(int argc, char** argv) { return glab::run_cli(argc, argv, std::cout, std::cerr); }
