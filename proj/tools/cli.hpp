#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace serm::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kOther = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kInputError = 3;
inline constexpr int kSolverError = 4;

// args excludes the program name. Normal output goes to `out`; the JSON error
// record (if any) goes to `err` and to <out>/error.json.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace serm::cli
