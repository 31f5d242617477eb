#include "ivi/cli/commands.hpp"

int main(int argc, char** argv) { return ivi::cli::run_cli(argc, argv); }
