#include "vqasynth/cli.hpp"

int main(int argc, char** argv) { return vqasynth::cli::run(argc, argv); }
