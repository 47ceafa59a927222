#include "femtoffr/harness.hpp"

int main(int argc, char** argv) { return femtoffr::run_cli(argc, argv); }
