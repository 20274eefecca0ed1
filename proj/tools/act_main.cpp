#include "act/experiment.hpp"

int main(int argc, char** argv) { return act::run_cli(argc, argv); }
