#include "munlab/cli.hpp"

int main(int argc, char** argv) { return munlab::cli_main(argc, argv); }
