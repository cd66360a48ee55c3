#include <vector>

#include "amefu/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return amefu::cli::run(args);
}
