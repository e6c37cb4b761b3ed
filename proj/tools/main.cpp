#include "dropcap/cli.hpp"

int main(int argc, char** argv) { return dropcap::cli::run_cli(argc, argv); }
