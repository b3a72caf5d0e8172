#include <iostream>

#include "golfer_cli/commands.hpp"

int main(int argc, char** argv) { return golfer_cli::run_cli(argc, argv, std::cout, std::cerr); }
