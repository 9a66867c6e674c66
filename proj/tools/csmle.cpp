#include "csmle/cli.hpp"

int main(int argc, char** argv) { return csmle::cli_main(argc, argv); }
