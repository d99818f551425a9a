#include "prgflow/cli.hpp"

int main(int argc, char** argv) { return prgflow::run_cli(argc, argv); }
