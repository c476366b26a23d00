#include "pancake/cli.hpp"

int main(int argc, char** argv) { return pancake::run_cli(argc, argv); }
