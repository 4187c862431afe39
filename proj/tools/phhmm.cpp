#include "phhmm/cli.hpp"

int main(int argc, char** argv) { return phhmm::run_cli(argc, argv); }
