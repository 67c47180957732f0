#include "csrag/cli/cli.hpp"

int main(int argc, char** argv) { return csrag::cli::run_cli(argc, argv); }
