#include "clustmd/cli.hpp"

int main(int argc, char** argv) { return clustmd::run_cli(argc, argv); }
