#include <fdiff/cli.hpp>

int main(int argc, char** argv) { return fdiff::cli::run(argc, argv); }
