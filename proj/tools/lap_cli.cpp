#include <iostream>

#include "lap/cli.hpp"

int main(int argc, char** argv) { return lap::cli::run_cli(argc, argv, std::cout, std::cerr); }
