#include "viscoflow/cli.hpp"

int main(int argc, char** argv) { return viscoflow::cli_main(argc, argv); }
