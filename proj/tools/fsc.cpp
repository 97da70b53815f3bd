#include "fsc/cli.hpp"

int main(int argc, char** argv) { return fsc::cli_main(argc, argv); }
