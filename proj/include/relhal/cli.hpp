#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "relhal/lens.hpp"

namespace relhal::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 2,  // bad flags, unreadable or malformed inputs, id mismatches
  kRuntime = 3,     // transport and other failures while running
  kPartial = 4,     // outputs written but some items unscored/unresolved
};

// Entry point shared by the `relhal` binary, the tests and the Python module.
// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// {"vocab": [...], "d_model": 8, "n_layers": 2, "n_heads": 2, "max_seq": 64, "seed": 42}
ToyModelConfig load_toy_model_config(const std::string& path);

}  // namespace relhal::cli
