#include <iostream>

#include "xray/cli.hpp"

int main(int argc, char** argv) { return xray::cli::run(argc, argv, std::cout, std::cerr); }
