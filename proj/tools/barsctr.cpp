#include "barsctr/cli/commands.hpp"

int main(int argc, char** argv) { return barsctr::cli::run_cli(argc, argv); }
