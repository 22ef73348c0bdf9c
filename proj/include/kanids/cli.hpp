#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kanids/core.hpp"

namespace kanids::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDegenerateData = 4;
inline constexpr int kExitDiverged = 5;
inline constexpr int kExitFeatureMismatch = 6;

int exit_code_for(ErrorCode code);

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kanids::cli
