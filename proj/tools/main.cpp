#include "commands.hpp"

int main(int argc, char** argv) { return rafa::cli::run(argc, argv); }
