#include <string>
#include <vector>

#include "debias/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return debias::run_cli(args);
}
