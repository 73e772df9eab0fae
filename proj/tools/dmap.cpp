#include "dmap/cli.hpp"

int main(int argc, char** argv) { return dmap::cli::dispatch(argc, argv); }
