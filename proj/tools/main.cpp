#include <iostream>

#include "deshadow/cli.hpp"

int main(int argc, char** argv) { return deshadow::cli::run(argc, argv, std::cout, std::cerr); }
