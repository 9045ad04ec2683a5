#include "ectrack/cli.hpp"

int main(int argc, char** argv) { return ectrack::run_cli(argc, argv); }
