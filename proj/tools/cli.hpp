#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wakenllm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name. Data goes to `out`,
/// diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wakenllm::cli
