#include "flowguard/cli.hpp"

int main(int argc, char** argv) { return flowguard::cli::dispatch(argc, argv); }
