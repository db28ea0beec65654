#include "increff/cli.hpp"

int main(int argc, char** argv) { return increff::run_cli(argc, argv); }
