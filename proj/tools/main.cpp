#include "cli.hpp"

int main(int argc, char** argv) { return snnwb::cli::run_cli(argc, argv); }
