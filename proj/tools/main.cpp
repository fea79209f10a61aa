#include "evrpeps/cli.hpp"

int main(int argc, char** argv) { return evrpeps::cli::run(argc, argv); }
