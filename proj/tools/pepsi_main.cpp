#include "pepsi/cli.hpp"

int main(int argc, char** argv) { return pepsi::cli_dispatch(argc, argv); }
