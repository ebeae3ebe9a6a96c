#pragma once

#include <string>
#include <vector>

namespace protonlu::cli {

// Entry point behind main(). Returns the process exit code: 0 iff no error
// was reported. Every command is deterministic given --seed.
int run(const std::vector<std::string>& args);
int run(int argc, const char* const* argv);

}  // namespace protonlu::cli
