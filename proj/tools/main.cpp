#include "pvmix/cli.hpp"

int main(int argc, char** argv) { return pvmix::run_pipeline(argc, argv); }
