#include "dge/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return dge::cli::run(argc, argv, std::cout, std::cerr); }
