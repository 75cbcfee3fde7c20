#include "ccf/cli/app.hpp"

int main(int argc, char** argv) { return ccf::cli::run_cli(argc, argv); }
