#include "nvforge/cli.hpp"

int main(int argc, char** argv) { return nvforge::cli::run(argc, argv); }
