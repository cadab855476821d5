#include <iostream>

#include "ezcoal/cli.hpp"

int main(int argc, char** argv) { return ezcoal::cli::run(argc, argv, std::cout, std::cerr); }
