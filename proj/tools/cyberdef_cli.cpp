#include <iostream>

#include "cyberdef/cli.hpp"

int main(int argc, char** argv) { return cyberdef::cli::run(argc, argv, std::cout, std::cerr); }
