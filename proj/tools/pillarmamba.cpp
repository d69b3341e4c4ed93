#include <iostream>

#include "pillarmamba/cli.hpp"

int main(int argc, char** argv) { return pillarmamba::run_cli(argc, argv, std::cout, std::cerr); }
