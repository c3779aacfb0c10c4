#include <iostream>
#include <string>
#include <vector>

#include "trulr/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return trulr::cli::run(args, std::cout, std::cerr);
}
