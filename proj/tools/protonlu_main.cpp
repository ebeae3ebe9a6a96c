#include "protonlu/cli.hpp"

int main(int argc, char** argv) { return protonlu::cli::run(argc, argv); }
