#include <iostream>
#include <string>
#include <vector>

#include "pifsim/config.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pifsim::cli::run(args, std::cout, std::cerr);
}
