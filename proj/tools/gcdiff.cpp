#include "gcdiff/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gcdiff::cli::run(argc, argv, std::cout, std::cerr); }
