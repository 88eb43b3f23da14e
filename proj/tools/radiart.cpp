#include <iostream>
#include <string>
#include <vector>

#include "radiart/cli.hpp"
#include "radiart/tensor.hpp"

int main(int argc, char** argv) {
    radiart::tune_allocator();
    std::vector<std::string> args(argv + 1, argv + argc);
    return radiart::run_cli(args, std::cout, std::cerr);
}
