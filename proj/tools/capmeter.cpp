#include "capmeter/cli.hpp"

int main(int argc, char** argv) { return capmeter::cli::run(argc, argv); }
