#pragma once

namespace vqasynth::cli {

// Parses argv and runs one subcommand. Exit codes: 0 ok, 1 runtime failure,
// 2 usage.
int run(int argc, char** argv);

}  // namespace vqasynth::cli
