#include "fracbn/experiments.hpp"

int main(int argc, char** argv) { return fracbn::run_cli(argc, argv); }
