#include "acflow/io.hpp"

int main(int argc, char** argv) { return acflow::cli_main(argc, argv); }
