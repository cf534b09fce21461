#include "cablewatch/cli.hpp"

int main(int argc, char** argv) { return cablewatch::cli::run(argc, argv); }
