#include "fafed/cli.hpp"

int main(int argc, char** argv) { return fafed::cli_main(argc, argv); }
