#include "evacmix/cli.hpp"

int main(int argc, char** argv) { return evacmix::cli::run(argc, argv); }
