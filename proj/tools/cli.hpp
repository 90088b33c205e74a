#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace voxmae::cli {

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailure = 1;  // a check failed or a runtime error occurred
constexpr int kUsage = 2;    // bad flags or an invalid configuration

// args excludes the program name, e.g. {"pretrain", "--preset", "tiny"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace voxmae::cli
