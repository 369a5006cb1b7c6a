#include "xferlab/harness.hpp"

int main(int argc, char** argv) { return xferlab::harness::run_cli(argc, argv); }
