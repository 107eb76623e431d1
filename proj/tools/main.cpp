#include "commands.hpp"

int main(int argc, char** argv) { return deepinv::cli::run_cli(argc, argv); }
