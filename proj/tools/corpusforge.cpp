#include "corpusforge/cli.hpp"

int main(int argc, char** argv) { return corpusforge::cli::run(argc, argv); }
