#include "veritas/cli.hpp"

int main(int argc, char** argv) { return veritas::cli::run(argc, argv); }
