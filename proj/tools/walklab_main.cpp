#include "walklab/cli.hpp"

int main(int argc, char** argv) { return walklab::cli::dispatch(argc, argv); }
