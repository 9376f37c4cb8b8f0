#include <iostream>

#include "anchorgk/commands.hpp"

int main(int argc, char** argv) { return anchorgk::cli::run(argc, argv, std::cout, std::cerr); }
