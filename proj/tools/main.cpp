#include "tampo/cli.hpp"

int main(int argc, char** argv) { return tampo::cli::run_main(argc, argv); }
