#include "epialert/cli.hpp"

int main(int argc, char** argv) { return epialert::cli::run_main(argc, argv); }
