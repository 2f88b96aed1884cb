#include "cli.hpp"

int main(int argc, char** argv) { return temi::cli::run(argc, argv); }
