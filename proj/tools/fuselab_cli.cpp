#include "fuselab/cli.hpp"

int main(int argc, char** argv) { return fuselab::cli::run(argc, argv); }
