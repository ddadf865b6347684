#include "qlab/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return qlab::run_cli({argv, argv + argc}, std::cout, std::cerr); }
