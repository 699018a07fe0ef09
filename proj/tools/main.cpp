#include "saesteer/cli.hpp"

int main(int argc, char** argv) { return saesteer::cli_dispatch(argc, argv); }
