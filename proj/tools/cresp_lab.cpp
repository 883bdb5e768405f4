#include "cresp/cli.hpp"

int main(int argc, char** argv) { return cresp::cli::run(argc, argv); }
