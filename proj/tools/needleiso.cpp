#include "needleiso/cli.hpp"

int main(int argc, char** argv) { return needleiso::cli::main_entry(argc, argv); }
