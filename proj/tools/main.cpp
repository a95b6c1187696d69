#include "cli.hpp"

int main(int argc, char** argv) { return collective::cli::run(argc, argv); }
