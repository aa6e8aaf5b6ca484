#include <iostream>

#include "adaptreg/cli.hpp"

int main(int argc, char** argv) { return adaptreg::cli::run(argc, argv, std::cout, std::cerr); }
