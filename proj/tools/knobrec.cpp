#include "knobrec/cli.hpp"

int main(int argc, char** argv) { return knobrec::cli::run(argc, argv); }
