#include "cli.hpp"

int main(int argc, char** argv) { return pedintent::cli::run(argc, argv); }
