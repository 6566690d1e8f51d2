#include "graze/cli/commands.hpp"

int main(int argc, char** argv) { return graze::cli::run_cli(argc, argv); }
