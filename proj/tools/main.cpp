#include "uavbs/cli.hpp"

int main(int argc, char** argv) { return uavbs::cli_main(argc, argv); }
