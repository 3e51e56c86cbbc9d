#include "supmer/cli.hpp"

int main(int argc, char** argv) { return supmer::cli_main(argc, argv); }
