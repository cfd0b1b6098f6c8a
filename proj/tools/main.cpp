#include "cli.hpp"

int main(int argc, char** argv) { return cdinn::cli::run(argc, argv); }
