#include "spancca/cli.hpp"

int main(int argc, char** argv) { return spancca::cli::main(argc, argv); }
