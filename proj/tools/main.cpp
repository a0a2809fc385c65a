#include "sosmas/cli.hpp"

int main(int argc, char** argv) { return sosmas::cli::run(argc, argv); }
