#include <iostream>

#include "calibrex/cli.hpp"

int main(int argc, char** argv) {
    return calibrex::cli::run(argc, argv, std::cout, std::cerr);
}
