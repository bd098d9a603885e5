#include "zapq/cli.hpp"

int main(int argc, char** argv) { return zapq::cli::main(argc, argv); }
