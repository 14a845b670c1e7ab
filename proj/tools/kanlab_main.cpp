#include "kanlab/cli.hpp"

int main(int argc, char** argv) { return kanlab::parse_and_dispatch(argc, argv); }
