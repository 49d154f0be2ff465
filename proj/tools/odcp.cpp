#include "odcp/cli.hpp"

int main(int argc, char** argv) { return odcp::cli::main(argc, argv); }
