#include <iostream>
#include <string>
#include <vector>

#include "dvhn/cli.hpp"

int main(int argc, char** argv) {
    return dvhn::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
