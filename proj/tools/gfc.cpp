#include "gfc/cli.hpp"

int main(int argc, char** argv) { return gfc::cli::run_command(argc, argv); }
