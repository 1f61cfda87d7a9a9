#include "commands.hpp"

int main(int argc, char** argv) { return gpdi::cli::run(argc, argv); }
