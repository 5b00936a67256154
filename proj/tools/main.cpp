#include "camflow/cli.hpp"

int main(int argc, char** argv) { return camflow::cli::dispatch(argc, argv); }
