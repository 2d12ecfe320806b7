#include <string>
#include <vector>

#include "hiftnet/cli.hpp"

int main(int argc, char** argv) {
    return hiftnet::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
