#include "memse/cli.hpp"

int main(int argc, char** argv) { return memse::cli::run(argc, argv); }
