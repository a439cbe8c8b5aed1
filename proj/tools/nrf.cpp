#include "nrf/cli.hpp"

int main(int argc, char** argv) { return nrf::cli::run(argc, argv); }
