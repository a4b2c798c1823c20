#include "seqmask/cli.hpp"

int main(int argc, char** argv) { return seqmask::run_cli(argc, argv); }
