#include <string>
#include <vector>

#include "labq/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return labq::run_cli(args);
}
