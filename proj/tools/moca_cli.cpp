#include "moca/cli/app.hpp"

int main(int argc, char** argv) { return moca::cli::run(argc, argv); }
