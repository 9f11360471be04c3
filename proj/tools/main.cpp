#include "cli.hpp"

int main(int argc, char** argv) { return rmab::cli::parse_and_dispatch(argc, argv); }
