#include "nflab/cli.hpp"

int main(int argc, char** argv) { return nfl::cli::run_cli(argc, argv); }
