#include <iostream>

#include "labelaudit/cli.hpp"

int main(int argc, char** argv) { return labelaudit::run_cli(argc, argv, std::cout, std::cerr); }
