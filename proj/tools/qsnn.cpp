#include <iostream>

#include "qsnn/cli.hpp"

int main(int argc, char** argv) { return qsnn::run_cli(argc, argv, std::cout, std::cerr); }
