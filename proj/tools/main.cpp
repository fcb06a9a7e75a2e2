#include "cli.hpp"

int main(int argc, char** argv) { return moereid::cli::run(argc, argv); }
