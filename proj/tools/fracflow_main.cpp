#include "fracflow/harness.hpp"

int main(int argc, char** argv) { return fracflow::harness_main(argc, argv); }
