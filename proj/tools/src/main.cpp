#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return copaint::service::run_cli(argc, argv, std::cout, std::cerr); }
