#pragma once

#include <string>
#include <vector>

namespace pancake {

// Parses and dispatches `pancake <synth|train|render|eval|ablate> ...`.
// Exit codes: 0 success, 1 runtime failure, 2 usage/config errors.
int run_cli(int argc, const char* const* argv);

// argv-style convenience wrapper used by tests.
int run_cli(const std::vector<std::string>& args);

} // namespace pancake
