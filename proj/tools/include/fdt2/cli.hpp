#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fdt2::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

// Runs the command line `args` (without the program name). Returns 0 on
// success, 1 on validation failure or runtime error, 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// True when FDT2_STRICT=1: outputs must be byte-identical across runs, so
// wall-clock measurements are written as 0.
bool strict_mode();

}  // namespace fdt2::cli
