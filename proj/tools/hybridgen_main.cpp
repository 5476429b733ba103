#include "hybridgen/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hybridgen::cli::run(argc, argv, std::cout, std::cerr); }
