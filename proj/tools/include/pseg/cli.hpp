#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pseg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitInternal = 2;

/// Parses and runs one command line (argv[0] is the program name).
int dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

/// Built-in invariant checks; returns the number of failures.
int run_selftest(std::ostream& out);

}  // namespace pseg::cli
