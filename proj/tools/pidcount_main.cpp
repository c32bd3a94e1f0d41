#include "pidcount/cli.hpp"

int main(int argc, char** argv) { return pidcount::run_cli(argc, argv); }
