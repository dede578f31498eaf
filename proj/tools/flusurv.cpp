#include "cli/commands.hpp"

int main(int argc, char** argv) { return flusurv::cli::run(argc, argv); }
