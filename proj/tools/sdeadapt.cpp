#include "sdeadapt/cli.hpp"

int main(int argc, char** argv) { return sdeadapt::cli::run(argc, argv); }
