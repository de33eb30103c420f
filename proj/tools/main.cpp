#include "floeseg/cli.hpp"

int main(int argc, char** argv) { return floeseg::run_cli(argc, argv); }
